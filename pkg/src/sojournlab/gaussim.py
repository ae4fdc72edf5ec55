"""Exact-in-distribution simulation of the Gaussian paths and fields used here.

Fractional Brownian motion is sampled by circulant embedding of its
stationary increments (Davies-Harte); stationary unit-variance processes by
circulant embedding of the covariance sequence with automatic torus padding;
separable 2D fields by per-axis factorization. Everything is a pure function
of (spec, grid, seed), so identical inputs give bitwise identical output.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import ndtr

from .mc import NumericFailure

EIG_CLIP_REL = 1e-9          # clip threshold relative to the largest eigenvalue
_PAD_FACTORS = (1, 2, 4, 8)  # embedding torus enlargements tried in order


# ---------------------------------------------------------------------------
# grids and containers

@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [start, end] with n_points points."""
    start: float
    end: float
    n_points: int

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError("GridSpec requires end > start")
        if self.n_points < 2:
            raise ValueError("GridSpec requires n_points >= 2")

    @property
    def step(self):
        return (self.end - self.start) / (self.n_points - 1)

    def times(self):
        return np.linspace(self.start, self.end, self.n_points)


@dataclass(frozen=True)
class Lattice2D:
    axis1: GridSpec
    axis2: GridSpec

    @property
    def cell_area(self):
        return self.axis1.step * self.axis2.step


@dataclass(frozen=True)
class SamplePath:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError("values length must match grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Field2D:
    lattice: Lattice2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        shape = (self.lattice.axis1.n_points, self.lattice.axis2.n_points)
        if v.shape != shape:
            raise ValueError(f"values shape {v.shape} does not match lattice {shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DriftSpec:
    """Power drift h(t) = b * |t|**beta; b = 0 encodes no drift."""
    b: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("drift coefficient b must be >= 0")
        if self.beta <= 0:
            raise ValueError("drift exponent beta must be > 0")

    def h(self, t):
        if self.b == 0.0:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.b * np.abs(t) ** self.beta


# ---------------------------------------------------------------------------
# process specifications

@dataclass(frozen=True)
class FbmW:
    """W_alpha(t) = sqrt(2) B_alpha(t) - |t|^alpha - drift.h(t).

    alpha = 0 is the degenerate axis convention: the fluctuation part is
    identically zero and only -drift.h(t) remains.
    """
    alpha: float
    drift: DriftSpec = field(default_factory=DriftSpec)

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 2.0):
            raise ValueError("alpha must lie in [0, 2]")


@dataclass(frozen=True)
class StationaryExp1D:
    """Centered, unit variance, correlation r(t) = exp(-a |t|^alpha)."""
    a: float
    alpha: float

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("a must be > 0")
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError("alpha must lie in (0, 2]")


@dataclass(frozen=True)
class StationaryExp2D:
    a1: float
    a2: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        for a, al in ((self.a1, self.alpha1), (self.a2, self.alpha2)):
            if a <= 0:
                raise ValueError("a_i must be > 0")
            if not (0.0 < al <= 2.0):
                raise ValueError("alpha_i must lie in (0, 2]")


@dataclass(frozen=True)
class ScaledVariance2D:
    """X(t) = sigma(t) Y(t), sigma(t) = exp(-b1|t1-t1*|^beta1 - b2|t2-t2*|^beta2)."""
    base: StationaryExp2D
    b1: float
    b2: float
    beta1: float
    beta2: float
    t_star: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.b1 <= 0 or self.b2 <= 0:
            raise ValueError("b_i must be > 0")
        if self.beta1 <= 0 or self.beta2 <= 0:
            raise ValueError("beta_i must be > 0")

    def sigma(self, t1, t2):
        return np.exp(-self.b1 * np.abs(t1 - self.t_star[0]) ** self.beta1
                      - self.b2 * np.abs(t2 - self.t_star[1]) ** self.beta2)


@dataclass(frozen=True)
class Chi:
    """chi(t) = sqrt(sum of m squared iid copies of the base process)."""
    m: int
    base: StationaryExp1D

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("degree m must be >= 1")


@dataclass(frozen=True)
class Queue:
    """Reflected fBm with drift: Q(t) = sup_{s>=t}(B(s) - B(t) - c(s-t)).

    The generator looks ahead H = horizon_mult * tau_star * u_ref beyond the
    requested grid; the optimal exceedance lookahead at level u is about
    tau_star * u, so u_ref should be the largest level of interest. Truncation
    bias is one sided (Q is underestimated).
    """
    alpha: float
    c: float
    horizon_mult: float = 5.0
    u_ref: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError("Queue requires alpha in (0, 2)")
        if self.c <= 0:
            raise ValueError("service rate c must be > 0")
        if self.horizon_mult <= 0 or self.u_ref <= 0:
            raise ValueError("horizon_mult and u_ref must be > 0")

    @property
    def tau_star(self):
        return self.alpha / (self.c * (2.0 - self.alpha))

    @property
    def horizon(self):
        return self.horizon_mult * self.tau_star * self.u_ref


# ---------------------------------------------------------------------------
# circulant machinery

def _synth_count(m):
    return (m + 1) // 2


def _circulant_normals(rng, m, lam):
    """m stationary Gaussian rows with circulant covariance eigenvalues lam."""
    M = len(lam)
    pairs = _synth_count(m)
    a = rng.standard_normal((pairs, M))
    b = rng.standard_normal((pairs, M))
    spec = np.sqrt(lam / M) * (a + 1j * b)
    z = np.fft.fft(spec, axis=1)
    out = np.empty((2 * pairs, M))
    out[0::2] = z.real
    out[1::2] = z.imag
    return out[:m]


def _guard_eigs(lam, context):
    mx = float(lam.max())
    mn = float(lam.min())
    if mx <= 0:
        raise NumericFailure(f"{context}: embedding spectrum not positive")
    if mn < -EIG_CLIP_REL * mx:
        return None
    return np.maximum(lam, 0.0)


def _fgn_eigs(alpha, n_steps):
    """Circulant eigenvalues for unit-step fractional Gaussian noise."""
    k = np.arange(n_steps + 1, dtype=float)
    g = 0.5 * (np.abs(k - 1) ** alpha - 2 * k ** alpha + (k + 1) ** alpha)
    circ = np.concatenate([g, g[-2:0:-1]])
    lam = np.fft.fft(circ).real
    ok = _guard_eigs(lam, f"fGn(alpha={alpha})")
    if ok is None:
        raise NumericFailure(
            f"fGn(alpha={alpha}, n={n_steps}): embedding eigenvalue "
            f"{lam.min():.3e} below -{EIG_CLIP_REL:g} * max; "
            "use the dense fallback for this grid")
    return ok


def fbm_increment_batch(rng, m, alpha, n_steps, delta):
    """(m, n_steps) exact fBm increments over steps of length delta."""
    if alpha == 2.0:
        xi = rng.standard_normal(m)
        return (delta * xi)[:, None] * np.ones((1, n_steps))
    lam = _fgn_eigs(alpha, n_steps)
    inc = _circulant_normals(rng, m, lam)[:, :n_steps]
    return inc * delta ** (alpha / 2.0)


def fbm_batch(rng, m, alpha, n_steps, delta, pin_index=0):
    """(m, n_steps+1) fBm paths on a uniform grid, pinned to 0 at pin_index.

    With pin_index = k the rows are distributed as two-sided fBm evaluated on
    the grid (j - k) * delta, j = 0..n_steps. Stationary increments make this
    a plain re-anchoring of the same increment sequence.
    """
    if alpha == 2.0:
        xi = rng.standard_normal(m)
        t = (np.arange(n_steps + 1) - pin_index) * delta
        return xi[:, None] * t[None, :]
    inc = fbm_increment_batch(rng, m, alpha, n_steps, delta)
    b = np.concatenate([np.zeros((m, 1)), np.cumsum(inc, axis=1)], axis=1)
    if pin_index:
        b = b - b[:, pin_index][:, None]
    return b


def _dense_fbm(rng, m, alpha, times):
    """Dense-factorization fallback for small grids (exact covariance)."""
    t = np.asarray(times, dtype=float)
    nz = np.abs(t) > 1e-15
    ts = t[nz]
    aa = np.abs(ts[:, None]) ** alpha + np.abs(ts[None, :]) ** alpha
    cov = 0.5 * (aa - np.abs(ts[:, None] - ts[None, :]) ** alpha)
    w, v = np.linalg.eigh(cov)
    w = np.maximum(w, 0.0)
    root = v * np.sqrt(w)[None, :]
    g = rng.standard_normal((m, len(ts)))
    out = np.zeros((m, len(t)))
    out[:, nz] = g @ root.T
    return out


def simulate_fbm(alpha, grid, seed):
    """One exact fBm path on a grid starting at 0.

    Cov(B(s), B(t)) = (s^alpha + t^alpha - |t-s|^alpha) / 2 at grid points.
    """
    if not (0.0 < alpha <= 2.0):
        raise ValueError("alpha must lie in (0, 2]")
    if abs(grid.start) > 1e-12:
        raise ValueError("fBm grids must start at 0 (path pinned at the origin)")
    rng = seed if isinstance(seed, np.random.Generator) else \
        np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    n_steps = grid.n_points - 1
    if alpha < 2.0 and n_steps < 8:
        values = _dense_fbm(rng, 1, alpha, grid.times())[0]
    else:
        values = fbm_batch(rng, 1, alpha, n_steps, grid.step)[0]
    return SamplePath(grid, values)


def _stationary_eigs(a, alpha, delta, n_points):
    """Eigenvalues for r(k delta) = exp(-a (k delta)^alpha), padded until valid."""
    worst = None
    for pad in _PAD_FACTORS:
        P = pad * max(n_points - 1, 1)
        r = np.exp(-a * (np.arange(P + 1) * delta) ** alpha)
        circ = np.concatenate([r, r[-2:0:-1]])
        lam = np.fft.fft(circ).real
        worst = min(worst, lam.min()) if worst is not None else lam.min()
        ok = _guard_eigs(lam, "stationary embedding")
        if ok is not None:
            return ok
    raise NumericFailure(
        f"stationary covariance exp(-{a}|t|^{alpha}) not embeddable at step "
        f"{delta:g} (most negative eigenvalue {worst:.3e} after padding x{_PAD_FACTORS[-1]})")


def stationary_batch(rng, m, spec, n_points, delta):
    """(m, n_points) stationary unit-variance paths for a StationaryExp1D spec."""
    lam = _stationary_eigs(spec.a, spec.alpha, delta, n_points)
    return _circulant_normals(rng, m, lam)[:, :n_points]


def _axis_root(a, alpha, times):
    """Symmetric square root of the 1D exponential covariance on a grid."""
    d = np.abs(times[:, None] - times[None, :])
    cov = np.exp(-a * d ** alpha)
    w, v = np.linalg.eigh(cov)
    w = np.maximum(w, 0.0)
    return v * np.sqrt(w)[None, :]


def stationary2d_batch(rng, m, spec, lattice):
    """(m, n1, n2) fields with separable covariance, via per-axis factorization."""
    r1 = _axis_root(spec.a1, spec.alpha1, lattice.axis1.times())
    r2 = _axis_root(spec.a2, spec.alpha2, lattice.axis2.times())
    g = rng.standard_normal((m, r1.shape[0], r2.shape[0]))
    return (r1 @ g) @ r2.T


def queue_batch(rng, m, spec, n_points, delta, u_ref=None):
    """(m, n_points) stationary queue paths Q(t_i) on a grid of step delta.

    Q(t_i) = max over grid s in [t_i, t_i + H] of (B(s) - B(t_i) - c (s - t_i))
    with lookahead H = horizon_mult * tau_star * max(u_ref, spec.u_ref).
    """
    uref = spec.u_ref if u_ref is None else max(u_ref, spec.u_ref)
    H = spec.horizon_mult * spec.tau_star * uref
    w = max(int(math.ceil(H / delta)), 1)
    total_steps = (n_points - 1) + w
    b = fbm_batch(rng, m, spec.alpha, total_steps, delta)
    t = np.arange(total_steps + 1) * delta
    y = b - spec.c * t[None, :]
    r = sliding_max(y, w + 1)
    return (r - y)[:, :n_points]


def sliding_max(y, width):
    """Row-wise max over windows [i, i + width - 1] (van Herk two-pass)."""
    m, L = y.shape
    nb = -np.inf
    pad = (-L) % width
    yp = np.concatenate([y, np.full((m, pad), nb)], axis=1)
    blocks = yp.reshape(m, -1, width)
    head = np.maximum.accumulate(blocks, axis=2).reshape(m, -1)
    tail = np.maximum.accumulate(blocks[:, :, ::-1], axis=2)[:, :, ::-1].reshape(m, -1)
    out = np.empty((m, L))
    last = min(L, yp.shape[1] - width + 1)
    out[:, :last] = np.maximum(tail[:, :last], head[:, width - 1:width - 1 + last])
    if last < L:
        out[:, last:] = tail[:, last:L]
    return out


def chi_batch(rng, m, spec, n_points, delta):
    lam = _stationary_eigs(spec.base.a, spec.base.alpha, delta, n_points)
    acc = np.zeros((m, n_points))
    for _ in range(spec.m):
        x = _circulant_normals(rng, m, lam)[:, :n_points]
        acc += x * x
    return np.sqrt(acc)


def w_field_batch(rng, m, spec, times, pin_index):
    """(m, len(times)) rows of W_alpha(t) - h(t) for an FbmW spec.

    times must be a uniform grid containing 0 at pin_index.
    """
    t = np.asarray(times, dtype=float)
    drift_term = np.abs(t) ** spec.alpha + spec.drift.h(t) if spec.alpha > 0 \
        else spec.drift.h(t)
    if spec.alpha == 0.0:
        return np.tile(-drift_term, (m, 1))
    delta = t[1] - t[0]
    b = fbm_batch(rng, m, spec.alpha, len(t) - 1, delta, pin_index=pin_index)
    return math.sqrt(2.0) * b - drift_term[None, :]


def simulate_process(spec, grid, seed, u_ref=None):
    """One replicate of any ProcessSpec variant on a grid or lattice."""
    rng = seed if isinstance(seed, np.random.Generator) else \
        np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    if isinstance(spec, FbmW):
        t = grid.times()
        k = int(np.argmin(np.abs(t)))
        if abs(t[k]) > 1e-9 * max(abs(grid.start), abs(grid.end)) + 1e-15:
            raise ValueError("FbmW grids must contain t = 0 as a grid point")
        return SamplePath(grid, w_field_batch(rng, 1, spec, t, k)[0])
    if isinstance(spec, StationaryExp1D):
        v = stationary_batch(rng, 1, spec, grid.n_points, grid.step)[0]
        return SamplePath(grid, v)
    if isinstance(spec, StationaryExp2D):
        if not isinstance(grid, Lattice2D):
            raise ValueError("StationaryExp2D requires a Lattice2D")
        return Field2D(grid, stationary2d_batch(rng, 1, spec, grid)[0])
    if isinstance(spec, ScaledVariance2D):
        if not isinstance(grid, Lattice2D):
            raise ValueError("ScaledVariance2D requires a Lattice2D")
        y = stationary2d_batch(rng, 1, spec.base, grid)[0]
        s = spec.sigma(grid.axis1.times()[:, None], grid.axis2.times()[None, :])
        return Field2D(grid, s * y)
    if isinstance(spec, Chi):
        v = chi_batch(rng, 1, spec, grid.n_points, grid.step)[0]
        return SamplePath(grid, v)
    if isinstance(spec, Queue):
        v = queue_batch(rng, 1, spec, grid.n_points, grid.step, u_ref=u_ref)[0]
        return SamplePath(grid, v)
    raise TypeError(f"unknown process spec {type(spec).__name__}")


def normal_tail(u):
    """Psi(u) = P(N(0,1) > u), accurate far into the tail."""
    return ndtr(-np.asarray(u, dtype=float)) if np.ndim(u) else float(ndtr(-u))
