"""Conditional sojourn experiments, the double-sum diagnostic, and queue
prefactor evaluation.

The estimands here are high-level trends: how close the conditional law of a
rescaled sojourn volume gets to its limiting curve as the level grows, how
fast pairwise block exceedances die off relative to single-block ones, and
how well the closed-form queue prediction tracks a crude simulation. Every
experiment is deterministic given (settings, seed) and never shares RNG
streams with the constant estimates it is compared against.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import mc
from .berman import NO_DRIFT, DomainRule, berman_curve_1d, berman_curve_2d
from .gaussim import (Chi, DriftSpec, GridSpec, Lattice2D, Queue,
                      ScaledVariance2D, StationaryExp1D, StationaryExp2D,
                      chi_batch, normal_tail, queue_batch, stationary2d_batch,
                      stationary_batch)

MIN_CONFIDENT_CONDITIONED = 500


class ScalingFamily:
    """Marker base class for the experiment family records below."""


@dataclass(frozen=True)
class Stationary1D(ScalingFamily):
    """Stationary process with correlation 1 - r ~ a|t|^alpha near 0."""
    a: float
    alpha: float

    def __post_init__(self):
        _check_local(self.a, self.alpha)


@dataclass(frozen=True)
class Stationary2D(ScalingFamily):
    """Separable stationary field, 1 - r ~ a1|t1|^alpha1 + a2|t2|^alpha2."""
    a1: float
    a2: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        _check_local(self.a1, self.alpha1)
        _check_local(self.a2, self.alpha2)


@dataclass(frozen=True)
class OnePoint2D(ScalingFamily):
    """Field with a unique variance peak: 1 - sigma ~ b_i|t_i|^beta_i at 0.

    The correlation parameters (a_i, alpha_i) and the variance parameters
    (b_i, beta_i) compete per axis; the alpha/beta ordering decides whether
    an axis keeps its fluctuations, keeps them with a drift, or degenerates
    to a pure drift in the local limit.
    """
    a1: float
    a2: float
    alpha1: float
    alpha2: float
    b1: float
    b2: float
    beta1: float
    beta2: float

    def __post_init__(self):
        _check_local(self.a1, self.alpha1)
        _check_local(self.a2, self.alpha2)
        for b, beta in ((self.b1, self.beta1), (self.b2, self.beta2)):
            if b <= 0 or beta <= 0:
                raise ValueError("b_i and beta_i must be > 0")

    def axis_table(self, i):
        """(hat_alpha, drift_coef) for axis i per the alpha/beta ordering."""
        a, alpha, b, beta = {1: (self.a1, self.alpha1, self.b1, self.beta1),
                             2: (self.a2, self.alpha2, self.b2, self.beta2)}[i]
        if alpha < beta:
            return alpha, 0.0
        if alpha == beta:
            return alpha, b / a
        return 0.0, b


@dataclass(frozen=True)
class ChiFamily(ScalingFamily):
    """Degree-m chi process built on a Stationary1D(a, alpha) base."""
    a: float
    alpha: float
    m: int = 1

    def __post_init__(self):
        _check_local(self.a, self.alpha)
        if self.m < 1:
            raise ValueError("degree m must be >= 1")


@dataclass(frozen=True)
class QueueFamily(ScalingFamily):
    """Stationary reflected-fBm queue with service rate c."""
    alpha: float
    c: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError("queue alpha must lie in (0, 2)")
        if self.c <= 0:
            raise ValueError("service rate c must be > 0")

    @property
    def tau_star(self):
        return self.alpha / (self.c * (2.0 - self.alpha))


def _check_local(a, alpha):
    if a <= 0:
        raise ValueError("local scale a must be > 0")
    if not (0.0 < alpha <= 2.0):
        raise ValueError("alpha must lie in (0, 2]")


def scaling_function(family, u):
    """Volume scale v(u) of the conditional sojourn limit for the family."""
    if u <= 0:
        raise ValueError("u must be > 0")
    if isinstance(family, (Stationary1D, ChiFamily)):
        return family.a ** (-1.0 / family.alpha) * u ** (-2.0 / family.alpha)
    if isinstance(family, Stationary2D):
        return (family.a1 ** (-1.0 / family.alpha1)
                * family.a2 ** (-1.0 / family.alpha2)
                * u ** (-2.0 / family.alpha1 - 2.0 / family.alpha2))
    if isinstance(family, OnePoint2D):
        out = 1.0
        for a, alpha, beta in ((family.a1, family.alpha1, family.beta1),
                               (family.a2, family.alpha2, family.beta2)):
            if alpha <= beta:
                out *= a ** (-1.0 / alpha)
            # alpha > beta: the exponent 1/alpha* is zero, a**0 = 1
            out *= u ** (-2.0 / min(alpha, beta))
        return out
    if isinstance(family, QueueFamily):
        # (sqrt(2) tau^alpha / (1 + c tau))^(2/alpha), with the sqrt pulled
        # out so clean cases (alpha = c = 1 gives exactly 1/2) stay exact
        tau = family.tau_star
        base = tau ** family.alpha / (1.0 + family.c * tau)
        return (2.0 ** (1.0 / family.alpha) * base ** (2.0 / family.alpha)
                * u ** (2.0 * (family.alpha - 1.0) / family.alpha))
    raise TypeError(f"unknown scaling family {type(family).__name__}")


@dataclass(frozen=True)
class ExperimentSettings:
    """Desk-scale knobs for the conditional sojourn experiments.

    The simulation grid always uses points_per_v nodes per unit of the local
    scale, so the lattice geometry is identical across levels u after
    rescaling; target curves are built at the same rescaled pitch so the two
    sides of the comparison discretize the sojourn functional identically.
    """
    domain_T: float = 1.0
    domain_T2: float = 1.0
    points_per_v: int = 8
    sim_batch: int = 20_000
    max_sims: int = 8_000_000
    target_S: float = 256.0
    target_S_2d: float = 8.0
    target_samples: int = 100_000
    queue_T: float | None = None
    queue_M: float = 16.0

    def __post_init__(self):
        if self.domain_T <= 0 or self.domain_T2 <= 0:
            raise ValueError("domain sides must be > 0")
        if self.points_per_v < 2:
            raise ValueError("points_per_v must be >= 2")
        if self.sim_batch < 1 or self.max_sims < self.sim_batch:
            raise ValueError("need 1 <= sim_batch <= max_sims")
        if self.target_S <= 0 or self.target_S_2d <= 0:
            raise ValueError("target domains must be > 0")
        if self.queue_T is not None and self.queue_T <= 0:
            raise ValueError("queue_T must be > 0 when given")
        if self.queue_M <= 0:
            raise ValueError("queue_M must be > 0")


@dataclass(frozen=True)
class ExperimentResult:
    family: ScalingFamily
    u: float
    x_grid: tuple
    ratio_hat: tuple
    ci_lo: tuple
    ci_hi: tuple
    n_conditioned: int
    target_curve: tuple
    target_se: tuple
    sup_distance: float
    flags: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.ratio_hat)
        if r.size and (r[0] != 1.0 or np.any(r < 0) or np.any(r > 1)
                       or np.any(np.diff(r) > 0)):
            raise ValueError("ratio_hat must start at 1, lie in [0,1], and be "
                             "nonincreasing (shared-sample construction)")
        t = np.asarray(self.target_curve)
        if t.size and (t[0] != 1.0 or np.any(np.diff(t) > 1e-12)):
            raise ValueError("target curve must start at 1 and be nonincreasing")


def _check_x_grid(x_grid):
    xg = [float(x) for x in x_grid]
    if not xg or xg[0] != 0.0:
        raise ValueError("x_grid must start at 0 (the ratio there anchors to 1)")
    if any(b <= a for a, b in zip(xg, xg[1:])):
        raise ValueError("x_grid must be strictly increasing")
    return xg


def conditional_sojourn_cdf(family, settings, u, x_grid,
                            n_target_conditioned=1000, seed=0, *, workers=1):
    """Empirical conditional law of the rescaled sojourn volume at level u.

    Simulates the family's process on a lattice with points_per_v nodes per
    local scale, keeps replicates whose grid maximum exceeds u, and reports
    P(Vol > v(u) x | sup > u) per x against the matching constant-ratio
    target curve built at the same rescaled pitch. The retained volumes are
    shared across the x grid, so the empirical curve is exactly
    nonincreasing with ratio 1 at x = 0.
    """
    xg = _check_x_grid(x_grid)
    if u <= 0:
        raise ValueError("u must be > 0")
    if n_target_conditioned < 1:
        raise ValueError("n_target_conditioned must be >= 1")
    t0 = time.perf_counter()
    v_u = scaling_function(family, u)
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(mc.derive_seed(seed, 0xE))))

    vols, n_sims, domain_vol, grid_meta = _collect_conditioned(
        family, settings, u, rng, n_target_conditioned)
    n_cond = vols.size
    if n_cond == 0:
        raise mc.NumericFailure(
            f"no replicates with sup > {u} in {n_sims} simulations; "
            "lower u or raise max_sims")

    flags = []
    if n_cond < MIN_CONFIDENT_CONDITIONED:
        flags.append("low-confidence")

    xg_kept, excluded = xg, []
    if isinstance(family, QueueFamily) and settings.queue_T is not None:
        # near the right edge of a finite horizon the conditional limit is
        # not defined; refuse x within one grid step of T
        edge = settings.queue_T - 1.0 / settings.points_per_v
        xg_kept = [x for x in xg if x < edge - 1e-12]
        excluded = [x for x in xg if x >= edge - 1e-12]
        if excluded:
            flags.append("excluded-near-horizon")
    if isinstance(family, OnePoint2D) and (family.axis_table(1)[0] == 0.0
                                           or family.axis_table(2)[0] == 0.0):
        flags.append("degenerate-axis")

    counts = np.array([(vols > v_u * x).sum() for x in xg_kept])
    ratio = counts / n_cond
    ci_lo = np.empty(len(xg_kept))
    ci_hi = np.empty(len(xg_kept))
    for j, k in enumerate(counts):
        ci_lo[j], ci_hi[j] = mc.wilson_interval(int(k), n_cond)

    target, target_se = _target_curve(family, settings, xg_kept,
                                      mc.derive_seed(seed, 0x7A), workers)
    sup_distance = float(np.max(np.abs(ratio - target)))

    meta = {"seed": seed, "v_u": v_u, "n_sims": n_sims,
            "domain_volume": domain_vol, "runtime_s": time.perf_counter() - t0,
            "pitch": 1.0 / settings.points_per_v, "excluded_x": tuple(excluded),
            **grid_meta}
    return ExperimentResult(family, float(u), tuple(xg_kept),
                            tuple(ratio.tolist()), tuple(ci_lo.tolist()),
                            tuple(ci_hi.tolist()), int(n_cond),
                            tuple(np.asarray(target).tolist()),
                            tuple(np.asarray(target_se).tolist()),
                            sup_distance, tuple(flags), meta)


def _collect_conditioned(family, settings, u, rng, n_target):
    """Retained sojourn volumes (sup > u) plus bookkeeping for the metadata."""
    ppv = settings.points_per_v
    sampler, vol_step, domain_vol, grid_meta = _family_sampler(
        family, settings, u, ppv)
    vols = []
    n_sims = 0
    while sum(len(v) for v in vols) < n_target and n_sims < settings.max_sims:
        m = min(settings.sim_batch, settings.max_sims - n_sims)
        cnt = sampler(rng, m)
        keep = cnt > 0
        vols.append(vol_step * cnt[keep])
        n_sims += m
    return np.concatenate(vols) if vols else np.empty(0), n_sims, \
        domain_vol, grid_meta


def _family_sampler(family, settings, u, ppv):
    """Per-family closure returning exceedance-node counts per replicate."""
    if isinstance(family, (Stationary1D, ChiFamily)):
        ell = scaling_function(family, u)
        delta = ell / ppv
        n_pts = int(math.ceil(settings.domain_T / delta)) + 1
        spec = StationaryExp1D(family.a, family.alpha)
        if isinstance(family, ChiFamily):
            chi = Chi(family.m, spec)

            def sampler(rng, m):
                return (chi_batch(rng, m, chi, n_pts, delta) > u).sum(axis=1)
        else:
            def sampler(rng, m):
                return (stationary_batch(rng, m, spec, n_pts, delta) > u
                        ).sum(axis=1)
        return sampler, delta, (n_pts - 1) * delta, \
            {"delta": delta, "n_points": n_pts}

    if isinstance(family, Stationary2D):
        e1 = family.a1 ** (-1.0 / family.alpha1) * u ** (-2.0 / family.alpha1)
        e2 = family.a2 ** (-1.0 / family.alpha2) * u ** (-2.0 / family.alpha2)
        d1, d2 = e1 / ppv, e2 / ppv
        n1 = int(math.ceil(settings.domain_T / d1)) + 1
        n2 = int(math.ceil(settings.domain_T2 / d2)) + 1
        lat = Lattice2D(GridSpec(0.0, (n1 - 1) * d1, n1),
                        GridSpec(0.0, (n2 - 1) * d2, n2))
        spec = StationaryExp2D(family.a1, family.a2, family.alpha1,
                               family.alpha2)

        def sampler(rng, m):
            f = stationary2d_batch(rng, m, spec, lat)
            return (f > u).sum(axis=(1, 2))
        return sampler, d1 * d2, (n1 - 1) * d1 * (n2 - 1) * d2, \
            {"delta": (d1, d2), "n_points": (n1, n2)}

    if isinstance(family, OnePoint2D):
        widths = []
        for a, alpha, beta in ((family.a1, family.alpha1, family.beta1),
                               (family.a2, family.alpha2, family.beta2)):
            scale = a ** (-1.0 / alpha) if alpha <= beta else 1.0
            widths.append(scale * u ** (-2.0 / min(alpha, beta)))
        d1, d2 = widths[0] / ppv, widths[1] / ppv
        h1 = int(math.ceil(settings.domain_T / d1))
        h2 = int(math.ceil(settings.domain_T2 / d2))
        lat = Lattice2D(GridSpec(-h1 * d1, h1 * d1, 2 * h1 + 1),
                        GridSpec(-h2 * d2, h2 * d2, 2 * h2 + 1))
        spec = ScaledVariance2D(
            StationaryExp2D(family.a1, family.a2, family.alpha1,
                            family.alpha2),
            family.b1, family.b2, family.beta1, family.beta2)
        s = spec.sigma(lat.axis1.times()[:, None], lat.axis2.times()[None, :])

        def sampler(rng, m):
            f = s[None, :, :] * stationary2d_batch(rng, m, spec.base, lat)
            return (f > u).sum(axis=(1, 2))
        return sampler, d1 * d2, 2 * h1 * d1 * 2 * h2 * d2, \
            {"delta": (d1, d2), "n_points": (2 * h1 + 1, 2 * h2 + 1)}

    if isinstance(family, QueueFamily):
        v_u = scaling_function(family, u)
        delta = v_u / ppv
        horizon = settings.queue_T if settings.queue_T is not None \
            else family.c * settings.queue_M
        n_pts = int(round(horizon * ppv)) + 1
        spec = Queue(family.alpha, family.c)

        def sampler(rng, m):
            q = queue_batch(rng, m, spec, n_pts, delta, u_ref=u)
            return (q > u).sum(axis=1)
        return sampler, delta, (n_pts - 1) * delta, \
            {"delta": delta, "n_points": n_pts, "horizon_T_u": (n_pts - 1) * delta}

    raise TypeError(f"unknown scaling family {type(family).__name__}")


def _target_curve(family, settings, xg, seed, workers):
    """Constant-ratio limit curve at the experiment's rescaled pitch."""
    pitch = 1.0 / settings.points_per_v
    if isinstance(family, (Stationary1D, ChiFamily)):
        vals, ses = berman_curve_1d(family.alpha, xg, settings.target_S,
                                    n_samples=settings.target_samples,
                                    seed=seed, delta=pitch, method="tilted",
                                    workers=workers, chunk_size=1024)
    elif isinstance(family, QueueFamily):
        if settings.queue_T is not None:
            vals, ses = berman_curve_1d(family.alpha, xg, settings.queue_T,
                                        n_samples=settings.target_samples,
                                        seed=seed, delta=pitch,
                                        workers=workers)
        else:
            vals, ses = berman_curve_1d(family.alpha, xg, settings.target_S,
                                        n_samples=settings.target_samples,
                                        seed=seed, delta=pitch,
                                        method="tilted", workers=workers,
                                        chunk_size=1024)
    elif isinstance(family, Stationary2D):
        rule = DomainRule(settings.target_S_2d, family.alpha1,
                          alpha2=family.alpha2)
        vals, ses = berman_curve_2d(family.alpha1, family.alpha2, xg, rule,
                                    n_samples=settings.target_samples,
                                    seed=seed,
                                    n_grid_axis=_rule_points(rule, pitch),
                                    workers=workers)
    elif isinstance(family, OnePoint2D):
        hats, drifts = [], []
        for i in (1, 2):
            hat_alpha, coef = family.axis_table(i)
            beta = family.beta1 if i == 1 else family.beta2
            hats.append(hat_alpha)
            drifts.append(DriftSpec(coef, beta) if coef > 0 else DriftSpec())
        rule = DomainRule(settings.target_S_2d, hats[0],
                          beta1=family.beta1 if drifts[0].b else NO_DRIFT,
                          alpha2=hats[1],
                          beta2=family.beta2 if drifts[1].b else NO_DRIFT)
        vals, ses = berman_curve_2d(hats[0], hats[1], xg, rule,
                                    n_samples=settings.target_samples,
                                    seed=seed, drift1=drifts[0],
                                    drift2=drifts[1],
                                    n_grid_axis=_rule_points(rule, pitch),
                                    workers=workers)
    else:
        raise TypeError(f"unknown scaling family {type(family).__name__}")
    target = vals / vals[0]
    rel0 = ses[0] / vals[0]
    target_se = target * np.sqrt((ses / np.maximum(vals, 1e-300)) ** 2
                                 + rel0 ** 2)
    target_se[0] = 0.0
    return target, target_se


def _rule_points(rule, pitch):
    """Axis point count so that no axis is coarser than the rescaled pitch."""
    longest = max(hi - lo for lo, hi in (rule.axis_interval(1),
                                         rule.axis_interval(2)))
    return int(round(longest / pitch)) + 1


# ---------------------------------------------------------------------------
# double-sum diagnostic

@dataclass(frozen=True)
class DoubleSumResult:
    family: ScalingFamily
    u: float
    n_schedule: tuple
    ratios: tuple
    std_errs: tuple
    joint_counts: tuple
    single_counts: tuple
    n_blocks: tuple
    metadata: dict = field(default_factory=dict)


def double_sum_diagnostic(family, u, n_schedule=(2.0, 4.0, 8.0), seed=0, *,
                          settings=None, n_sims=1_000_000,
                          independent_blocks=False):
    """Pairwise-over-single block exceedance ratio for a schedule of block sizes.

    Partitions the domain into blocks of side n per local scale unit and
    estimates sum_{i != j} P(sup_i > u, sup_j > u) / sum_k P(sup_k > u) by
    counting, per replicate, how many blocks exceed. Shared replicates across
    the schedule make the reported trend much more stable than independent
    runs would be. With independent_blocks=True every block is simulated from
    a fresh process (a control whose ratio must match the independence bound).
    """
    settings = settings or ExperimentSettings()
    if not isinstance(family, (Stationary1D, Stationary2D)):
        raise TypeError("double-sum diagnostic expects a stationary 1D or 2D "
                        "family")
    sched = [float(n) for n in n_schedule]
    if not sched or any(n <= 0 for n in sched):
        raise ValueError("n_schedule must be positive")
    if u <= 0:
        raise ValueError("u must be > 0")
    ppv = settings.points_per_v
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(mc.derive_seed(seed, 0xD5))))

    if isinstance(family, Stationary2D):
        return _double_sum_2d(family, settings, u, sched, rng, n_sims,
                              independent_blocks, seed)

    ell = scaling_function(family, u)
    delta = ell / ppv
    n_cells = int(math.ceil(settings.domain_T / delta))
    widths, n_blocks = [], []
    for n in sched:
        w = int(round(n * ppv))
        k = n_cells // w
        if k < 2:
            raise ValueError(
                f"block size n={n:g} gives {k} block(s) on a domain of "
                f"{n_cells} cells; the diagnostic needs at least 2")
        widths.append(w)
        n_blocks.append(k)

    spec = StationaryExp1D(family.a, family.alpha)
    joint = np.zeros(len(sched))
    single = np.zeros(len(sched))
    chunk_stats = [[] for _ in sched]
    done = 0
    while done < n_sims:
        m = min(settings.sim_batch, n_sims - done)
        if independent_blocks:
            exceed_all = []
            for i, (w, k) in enumerate(zip(widths, n_blocks)):
                ex = np.empty((m, k), dtype=bool)
                for b in range(k):
                    x = stationary_batch(rng, m, spec, w + 1, delta)
                    ex[:, b] = x.max(axis=1) > u
                exceed_all.append(ex)
        else:
            x = stationary_batch(rng, m, spec, n_cells + 1, delta)
            exceed_all = []
            for w, k in zip(widths, n_blocks):
                ex = np.empty((m, k), dtype=bool)
                for b in range(k):
                    ex[:, b] = x[:, b * w:(b + 1) * w + 1].max(axis=1) > u
                exceed_all.append(ex)
        for i, ex in enumerate(exceed_all):
            s = ex.sum(axis=1)
            j_c = float((s * (s - 1)).sum())
            s_c = float(s.sum())
            joint[i] += j_c
            single[i] += s_c
            chunk_stats[i].append((j_c, s_c))
        done += m

    ratios, ses = [], []
    for i in range(len(sched)):
        if single[i] == 0:
            raise mc.NumericFailure(
                f"no block exceedances at u={u}; lower u or raise n_sims")
        r = joint[i] / single[i]
        ratios.append(r)
        ses.append(_ratio_se(np.array(chunk_stats[i]), r))
    meta = {"seed": seed, "delta": delta, "n_sims": n_sims,
            "block_widths_cells": tuple(widths),
            "independent_blocks": independent_blocks}
    return DoubleSumResult(family, float(u), tuple(sched), tuple(ratios),
                           tuple(ses), tuple(joint.tolist()),
                           tuple(single.tolist()), tuple(n_blocks), meta)


def _double_sum_2d(family, settings, u, sched, rng, n_sims,
                   independent_blocks, seed):
    ppv = settings.points_per_v
    e1 = family.a1 ** (-1.0 / family.alpha1) * u ** (-2.0 / family.alpha1)
    e2 = family.a2 ** (-1.0 / family.alpha2) * u ** (-2.0 / family.alpha2)
    d1, d2 = e1 / ppv, e2 / ppv
    c1 = int(math.ceil(settings.domain_T / d1))
    c2 = int(math.ceil(settings.domain_T2 / d2))
    plans = []
    for n in sched:
        w = int(round(n * ppv))
        k1, k2 = c1 // w, c2 // w
        if k1 * k2 < 2:
            raise ValueError(
                f"block size n={n:g} gives {k1 * k2} block(s); need at least 2")
        plans.append((w, k1, k2))
    spec = StationaryExp2D(family.a1, family.a2, family.alpha1, family.alpha2)
    lat = Lattice2D(GridSpec(0.0, c1 * d1, c1 + 1),
                    GridSpec(0.0, c2 * d2, c2 + 1))
    joint = np.zeros(len(sched))
    single = np.zeros(len(sched))
    chunk_stats = [[] for _ in sched]
    done = 0
    while done < n_sims:
        m = min(settings.sim_batch, n_sims - done)
        f = stationary2d_batch(rng, m, spec, lat)
        for i, (w, k1, k2) in enumerate(plans):
            s = np.zeros(m, dtype=np.int64)
            for b1 in range(k1):
                for b2 in range(k2):
                    blk = f[:, b1 * w:(b1 + 1) * w + 1,
                            b2 * w:(b2 + 1) * w + 1]
                    s += blk.max(axis=(1, 2)) > u
            j_c = float((s * (s - 1)).sum())
            s_c = float(s.sum())
            joint[i] += j_c
            single[i] += s_c
            chunk_stats[i].append((j_c, s_c))
        done += m
    ratios, ses = [], []
    for i in range(len(sched)):
        if single[i] == 0:
            raise mc.NumericFailure(
                f"no block exceedances at u={u}; lower u or raise n_sims")
        r = joint[i] / single[i]
        ratios.append(r)
        ses.append(_ratio_se(np.array(chunk_stats[i]), r))
    meta = {"seed": seed, "delta": (d1, d2), "n_sims": n_sims,
            "independent_blocks": independent_blocks}
    return DoubleSumResult(family, float(u), tuple(sched), tuple(ratios),
                           tuple(ses), tuple(joint.tolist()),
                           tuple(single.tolist()),
                           tuple(k1 * k2 for _, k1, k2 in plans), meta)


def _ratio_se(stats, r):
    """Delta-method SE of sum(joint)/sum(single) from per-chunk sums."""
    if stats.shape[0] < 2:
        return float("nan")
    resid = stats[:, 0] - r * stats[:, 1]
    total_single = stats[:, 1].sum()
    return float(np.sqrt(max(resid.var(ddof=1) * stats.shape[0], 0.0))
                 / total_single)


# ---------------------------------------------------------------------------
# queue prefactor

@dataclass(frozen=True)
class QueueAsymptotics:
    tau_star: float
    m_u: float
    A: float
    B: float
    q_u: float


def queue_asymptotics(alpha, c, u):
    """Closed-form ingredients of the queue exceedance approximation.

    tau_star is the optimizing horizon of the variance problem, m(u) the
    effective Gaussian boundary level, A and B the local drift/curvature
    coefficients of the standardized boundary at tau_star, and q(u) = v(u)/u
    the sojourn scale per unit level.
    """
    fam = QueueFamily(alpha, c)
    if u <= 0:
        raise ValueError("u must be > 0")
    tau = fam.tau_star
    m_u = (1.0 + c * tau) / tau ** (alpha / 2.0) * u ** (1.0 - alpha / 2.0)
    A = tau ** (-alpha / 2.0) * 2.0 / (2.0 - alpha)
    B = tau ** (-alpha / 2.0 - 1.0) * alpha / 2.0
    q_u = scaling_function(fam, u) / u
    return QueueAsymptotics(tau, m_u, A, B, q_u)


def queue_prefactor(alpha, c, u, n, x, bhat):
    """Predicted P(sojourn of Q above u over [0, v(u) n] exceeds v(u) x).

    Combines a mixed sup/sojourn constant estimate bhat = Bhat_{alpha,alpha}
    (x, n) with the Gaussian Laplace approximation around the optimizing
    horizon: bhat * sqrt(2 A pi / B) * u / (m(u) v(u)) * Psi(m(u)). The
    Gaussian tail is evaluated at the effective boundary level m(u); the
    sqrt(pi) factor comes with the curvature integral of the Laplace step.
    """
    if n <= x:
        raise ValueError("requires n > x (the window must exceed the sojourn)")
    qa = queue_asymptotics(alpha, c, u)
    value = bhat.value if hasattr(bhat, "value") else float(bhat)
    v_u = qa.q_u * u
    return (value * math.sqrt(2.0 * qa.A * math.pi / qa.B)
            * u / (qa.m_u * v_u) * normal_tail(qa.m_u))


def queue_window_exceed_mc(u, c, n, n_paths=200_000, seed=0, *,
                           delta=1.0 / 256, chunk_size=20_000):
    """Crude MC of P(sup over [0, v(u) n] of Q > u) for the Brownian queue.

    Exact in distribution up to the grid skeleton: within-cell maxima and
    minima are drawn from Brownian bridge laws, and the post-window
    contribution sup_{s >= w}(Y(s) - Y(w)) is exponential with rate 2c,
    independent of the window path, so each path yields a conditional
    exceedance probability rather than a raw indicator.
    """
    fam = QueueFamily(1.0, c)
    if u <= 0 or n <= 0:
        raise ValueError("u and n must be > 0")
    w = scaling_function(fam, u) * n
    N = max(int(round(w / delta)), 1)
    d = w / N
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(mc.derive_seed(seed, 0x9E))))
    total = 0.0
    sq = 0.0
    done = 0
    while done < n_paths:
        m = min(chunk_size, n_paths - done)
        inc = rng.standard_normal((m, N)) * math.sqrt(d) - c * d
        y = np.concatenate([np.zeros((m, 1)), np.cumsum(inc, axis=1)], axis=1)
        a1, a2 = y[:, :-1], y[:, 1:]
        ub = rng.random((m, N))
        cellmax = 0.5 * (a1 + a2 + np.sqrt((a1 - a2) ** 2
                                           - 2.0 * d * np.log(ub)))
        um = rng.random((m, N))
        cellmin = 0.5 * (a1 + a2 - np.sqrt((a1 - a2) ** 2
                                           - 2.0 * d * np.log(um)))
        r = np.flip(np.maximum.accumulate(np.flip(cellmax, axis=1), axis=1),
                    axis=1)
        d1 = (r - a1).max(axis=1)
        d2 = (r - cellmin).max(axis=1)
        dsup = np.maximum(np.maximum(d1, d2), 0.0)
        mw = np.minimum(cellmin.min(axis=1), 0.0)
        p = np.where(dsup > u, 1.0,
                     np.exp(-2.0 * c * np.maximum(u - (y[:, -1] - mw), 0.0)))
        total += p.sum()
        sq += (p * p).sum()
        done += m
    mean = total / n_paths
    var = max(sq / n_paths - mean * mean, 0.0)
    return mean, math.sqrt(var / n_paths)
