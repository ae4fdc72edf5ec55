"""Sojourn-time functionals of discretized paths and fields.

The discrete sojourn measure of a path sampled at n points with step d is
mes{X > z} = d * #{i : X(t_i) > z}. All level reductions below are exact
consequences of that definition, with strict inequality throughout.
"""

from dataclasses import dataclass

import numpy as np

from .gaussim import Field2D, SamplePath


@dataclass(frozen=True)
class SojournProfile:
    """Sorted view of a sample: values descending, each worth `step` of time."""
    step: float
    values: np.ndarray
    total: float

    def time_above(self, z):
        return self.step * int(np.count_nonzero(self.values > z))

    def level(self, x):
        return _level_from_sorted(self.values, self.step, x)


@dataclass(frozen=True)
class LevelResult:
    """Level z with mes{X > z} <= x < mes{X >= z}; z is None when no finite
    level works (x below the resolution of an all-used-up sample)."""
    z: float | None
    rank: int
    count: int


def _step_of(obj):
    if isinstance(obj, SamplePath):
        return obj.grid.step, obj.values
    if isinstance(obj, Field2D):
        return obj.lattice.cell_area, obj.values.ravel()
    raise TypeError("expected SamplePath or Field2D")


def sojourn_time(obj, z):
    """mes{X > z}: time (or area) strictly above level z."""
    step, values = _step_of(obj)
    return step * int(np.count_nonzero(values > z))


def sojourn_profile(obj):
    step, values = _step_of(obj)
    v = np.sort(values)[::-1].copy()
    return SojournProfile(step, v, step * len(v))


def supremum(obj):
    _, values = _step_of(obj)
    return float(values.max())


def level_rank(x, step):
    """Smallest m with m * step > x, i.e. floor(x / step) + 1.

    The additive guard absorbs float noise when x is an exact multiple of
    step: the rank must not jump early on x/step = k - 1e-16.
    """
    if x < 0:
        raise ValueError("sojourn bound x must be >= 0")
    return int(np.floor(x / step + 1e-9)) + 1


def _level_from_sorted(desc_values, step, x):
    m = level_rank(x, step)
    n = len(desc_values)
    if m > n:
        return LevelResult(None, m, n)
    return LevelResult(float(desc_values[m - 1]), m, n)


def level_for_sojourn(obj, x):
    """Largest level z with sojourn time above z still exceeding x.

    Contract: mes{X > z} > x exactly when z < result.z. When x is at least
    the whole domain length, no level qualifies and z is None (the natural
    convention for downstream exp(z) reductions is exp(-inf) = 0).
    """
    step, values = _step_of(obj)
    return _level_from_sorted(np.sort(values)[::-1], step, x)


def batch_levels(values, step, x):
    """Row-wise level_for_sojourn over a (paths, points) value array.

    Returns a float array with -inf in rows where no finite level exists,
    which downstream exp() maps to an exact 0 contribution.
    """
    m = level_rank(x, step)
    n = values.shape[1]
    if m > n:
        return np.full(values.shape[0], -np.inf)
    return np.partition(values, n - m, axis=1)[:, n - m]


def reduction_quadrature(obj, x, rel_tol=1e-6):
    """exp of the sojourn level, found without order statistics.

    Bisects on z, querying only the counting measure mes{X > z}, until the
    bracket around the drop point of the indicator {mes > x} is tight enough
    that exp(z) is resolved to rel_tol. Serves as an independent check of the
    rank-based reduction: the two must agree to rel_tol on every sample.
    """
    step, values = _step_of(obj)
    total = step * len(values)
    if total <= x + 1e-9 * step:
        return 0.0
    lo = float(values.min()) - 1.0
    hi = float(values.max())
    # invariant: mes{ > lo } > x >= mes{ > hi }
    while hi - lo > 0.25 * rel_tol:
        mid = 0.5 * (lo + hi)
        if step * int(np.count_nonzero(values > mid)) > x:
            lo = mid
        else:
            hi = mid
    return float(np.exp(hi))
