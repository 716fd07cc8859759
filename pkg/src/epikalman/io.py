"""CSV and JSON readers/writers for series, trajectories, and manifests.

Formats are plain UTF-8. CSVs carry their metadata in ``#`` comment lines
so a file is self-describing; explicit arguments override the comments.
Floats are written with 17 significant digits, which round-trips IEEE
doubles exactly, so rewriting the same object is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .simulate import ObservationSeries, Trajectory

__all__ = [
    "read_json",
    "read_series",
    "read_trajectory",
    "write_json",
    "write_series",
    "write_trajectory",
]

_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FMT % float(x)


def _parse_csv(path) -> tuple[dict[str, str], list[str], np.ndarray]:
    """Split a commented CSV into (metadata, column names, value matrix)."""
    meta: dict[str, str] = {}
    rows: list[list[str]] = []
    header: list[str] | None = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if ":" in body:
                key, _, val = body.partition(":")
                meta[key.strip()] = val.strip()
            continue
        if header is None:
            header = [c.strip() for c in line.split(",")]
            continue
        rows.append([c.strip() for c in line.split(",")])
    if header is None or not rows:
        raise ConfigError(f"{path}: no data rows found")
    try:
        data = np.array([[float(c) for c in row] for row in rows])
    except ValueError as err:
        raise ConfigError(f"{path}: non-numeric cell ({err})") from None
    if data.shape[1] != len(header):
        raise ConfigError(f"{path}: rows do not match the header width")
    return meta, header, data


def write_series(path, series: ObservationSeries) -> None:
    """Write an observation series as a self-describing CSV."""
    lines = [
        f"# model: {series.model_name}",
        f"# N: {series.N}",
        f"# obs_map: {','.join(str(i) for i in series.obs_map)}",
    ]
    lines.append("t," + ",".join(f"y{i + 1}" for i in range(series.q)))
    for t, row in zip(series.times, series.values):
        lines.append(_fmt(t) + "," + ",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_series(path, N: int | None = None, model: str | None = None,
                obs_map: tuple[int, ...] | None = None) -> ObservationSeries:
    """Read an observation series CSV.

    Metadata comes from ``#`` comments unless overridden by the arguments.
    The population size is required one way or the other.
    """
    meta, header, data = _parse_csv(path)
    if header[0] != "t":
        raise ConfigError(f"{path}: first column must be t, got {header[0]!r}")
    if N is None:
        if "N" not in meta:
            raise ConfigError(
                f"{path}: population size not recorded; pass N explicitly"
            )
        N = int(meta["N"])
    if model is None:
        model = meta.get("model", "")
    if not model:
        raise ConfigError(f"{path}: model not recorded; pass model explicitly")
    if obs_map is None:
        if "obs_map" in meta:
            obs_map = tuple(int(i) for i in meta["obs_map"].split(","))
        else:
            obs_map = tuple(range(1, data.shape[1]))
    times = data[:, 0]
    if np.any(np.diff(times) <= 0):
        raise ConfigError(f"{path}: observation times must be increasing")
    return ObservationSeries(
        times=times,
        values=data[:, 1:],
        N=int(N),
        obs_map=obs_map,
        model_name=model,
        meta=dict(meta),
    )


def write_trajectory(path, traj: Trajectory) -> None:
    """Write a jump-process path as an event-list CSV (counts per event)."""
    from .model import get_model

    comps = get_model(traj.model_name).compartments
    lines = [
        f"# model: {traj.model_name}",
        f"# N: {traj.N}",
        f"# t_end: {_fmt(traj.t_end)}",
        "t," + ",".join(comps) + ",jump",
    ]
    jumps = np.concatenate([[-1], traj.jump_idx])  # no jump on the initial row
    for t, state, j in zip(traj.times, traj.states, jumps):
        cells = [_fmt(t)] + [str(int(c)) for c in state] + [str(int(j))]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory(path) -> Trajectory:
    meta, header, data = _parse_csv(path)
    for key in ("model", "N", "t_end"):
        if key not in meta:
            raise ConfigError(f"{path}: missing '# {key}:' comment")
    return Trajectory(
        times=data[:, 0],
        states=data[:, 1:-1].astype(np.int64),
        jump_idx=data[1:, -1].astype(np.int64),
        N=int(meta["N"]),
        model_name=meta["model"],
        t_end=float(meta["t_end"]),
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(path, obj) -> None:
    """Write JSON with sorted keys; numpy scalars and arrays are unwrapped."""
    Path(path).write_text(
        json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
    )


def read_json(path):
    return json.loads(Path(path).read_text())
