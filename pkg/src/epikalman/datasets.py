"""Bundled example data."""

from importlib import resources

import numpy as np

from .errors import ConfigError
from .io import read_series
from .simulate import ObservationSeries

__all__ = ["boarding_school"]


def boarding_school() -> ObservationSeries:
    """Daily influenza counts from a 1978 English boarding school outbreak.

    763 boys; the series is the number confined to bed on each of 14
    consecutive days, here normalized by the school size. A classic test
    case: closed population, single introduction, essentially complete
    reporting.
    """
    path = resources.files("epikalman").joinpath("data/boarding_school_1978.csv")
    with resources.as_file(path) as p:
        series = read_series(p)
    counts = series.values[:, 0] * series.N
    if series.n_obs != 14 or series.N != 763:
        raise ConfigError("bundled boarding school file is corrupted")
    if not np.allclose(counts, np.rint(counts), atol=1e-9):
        raise ConfigError("bundled boarding school file is corrupted")
    return series
