"""Command line front end.

Every run resolves its options from four layers (defaults, then a JSON
config file, then SOJOURNLAB_* environment variables, then explicit flags),
writes one CSV table plus a run manifest into the output directory, and
exits 0 on success, 2 on configuration errors, 3 on numeric failures.
A recorded manifest can be replayed with --from-manifest; everything the
rerun writes is byte-identical except the manifest's wall_time_s field,
and the worker count never changes any output byte.
"""

import argparse
import csv
import json
import math
import os
import secrets
import sys
import time

from . import __version__, mc
from .asymptotics import (ChiFamily, ExperimentSettings, OnePoint2D,
                          QueueFamily, Stationary1D, Stationary2D,
                          conditional_sojourn_cdf, double_sum_diagnostic)
from .berman import (NO_DRIFT, DomainRule, brownian_sup_oracle,
                     estimate_berman_1d, estimate_berman_1d_limit,
                     estimate_berman_2d, estimate_bhat, estimate_pickands,
                     parabola_constant_closed_form)
from .gaussim import DriftSpec

ENV_PREFIX = "SOJOURNLAB_"
MANIFEST_SCHEMA = "sojournlab-manifest-v1"
MANIFEST_NAME = "run_manifest.json"


class ConfigError(Exception):
    pass


class Opt:
    """One resolvable option: CLI flag, config key, and env variable."""

    def __init__(self, dest, typ, default, help, choices=None):
        self.dest = dest
        self.typ = typ
        self.default = default
        self.help = help
        self.choices = choices

    def add_to(self, parser):
        name = "--" + self.dest.replace("_", "-")
        if self.typ is bool:
            parser.add_argument(name, dest=self.dest, action="store_true",
                                default=argparse.SUPPRESS, help=self.help)
        else:
            parser.add_argument(name, dest=self.dest, type=self.typ,
                                choices=self.choices,
                                default=argparse.SUPPRESS, help=self.help)

    def coerce(self, raw):
        if self.typ is bool:
            if isinstance(raw, bool):
                return raw
            return str(raw).strip().lower() in ("1", "true", "yes", "on")
        if raw is None:
            return None
        return self.typ(raw)


SEMANTIC_GLOBALS = [
    Opt("seed", int, None, "base RNG seed; drawn once and recorded if omitted"),
]

SUBCOMMAND_OPTS = {
    "estimate-constant": [
        Opt("family", str, "plain-1d", "estimator family",
            choices=["plain-1d", "limit-1d", "pickands", "plain-2d", "bhat"]),
        Opt("alpha", float, 1.0, "roughness exponent of axis 1"),
        Opt("alpha2", float, 1.0, "roughness exponent of axis 2 (2D families)"),
        Opt("alphas", str, "1,1", "comma list of exponents (bhat family)"),
        Opt("x", float, 0.0, "sojourn size"),
        Opt("interval", str, "0,1", "grid interval lo,hi (plain-1d)"),
        Opt("n_grid", int, 4097, "grid points on the interval (plain-1d)"),
        Opt("drift_b", float, 0.0, "drift coefficient of axis 1"),
        Opt("drift_beta", float, 1.0, "drift exponent of axis 1"),
        Opt("drift2_b", float, 0.0, "drift coefficient of axis 2"),
        Opt("drift2_beta", float, 1.0, "drift exponent of axis 2"),
        Opt("rule_s", float, 8.0, "domain half-size S of the 2D rule"),
        Opt("n_grid_axis", int, 129, "grid points per 2D axis"),
        Opt("s_schedule", str, "4,8,16", "comma list of S values (limit fits)"),
        Opt("delta", float, 1.0 / 64, "grid step for limit estimators"),
        Opt("method", str, "tilted", "limit estimator kernel",
            choices=["tilted", "plain"]),
        Opt("n1", float, 2.0, "first-axis window length (bhat)"),
        Opt("delta1", float, 1.0 / 64, "first-axis grid step (bhat)"),
        Opt("delta_rest", float, 1.0 / 8, "remaining-axis skeleton step (bhat)"),
        Opt("n_samples", int, 100_000, "Monte Carlo sample count"),
        Opt("chunk_size", int, mc.DEFAULT_CHUNK, "samples per RNG chunk"),
        Opt("refine_check", bool, False, "rerun at half step and compare"),
    ],
    "run-experiment": [
        Opt("family", str, "stationary-1d", "process family",
            choices=["stationary-1d", "stationary-2d", "one-point-2d",
                     "chi", "queue"]),
        Opt("u", str, "2.5,3.0,3.5", "comma list of threshold levels"),
        Opt("x_grid", str, "0,0.5,1,1.5,2,3,4", "comma list of sojourn sizes"),
        Opt("a", float, 1.0, "axis-1 correlation scale"),
        Opt("a2", float, 1.0, "axis-2 correlation scale"),
        Opt("alpha", float, 1.0, "axis-1 correlation exponent"),
        Opt("alpha2", float, 1.0, "axis-2 correlation exponent"),
        Opt("b1", float, 1.0, "axis-1 variance-decay coefficient (one-point)"),
        Opt("b2", float, 1.0, "axis-2 variance-decay coefficient (one-point)"),
        Opt("beta1", float, 2.0, "axis-1 variance-decay exponent (one-point)"),
        Opt("beta2", float, 2.0, "axis-2 variance-decay exponent (one-point)"),
        Opt("chi_m", int, 1, "chi degree"),
        Opt("c", float, 1.0, "queue service rate"),
        Opt("n_conditioned", int, 1000, "conditioned replicates per level"),
        Opt("domain_t", float, 1.0, "observation window, axis 1"),
        Opt("domain_t2", float, 1.0, "observation window, axis 2"),
        Opt("points_per_v", int, 8, "grid nodes per local-scale unit"),
        Opt("sim_batch", int, 20_000, "simulated replicates per batch"),
        Opt("max_sims", int, 8_000_000, "hard cap on simulated replicates"),
        Opt("target_s", float, 256.0, "domain for 1D long-run target curves"),
        Opt("target_s_2d", float, 8.0, "domain for 2D target curves"),
        Opt("target_samples", int, 100_000, "samples for target curves"),
        Opt("queue_t", float, None, "fixed queue window in v(u) units; omit "
            "for the long-window regime"),
        Opt("queue_m", float, 16.0, "long-window length multiplier (queue)"),
    ],
    "double-sum": [
        Opt("family", str, "stationary-1d", "process family",
            choices=["stationary-1d", "stationary-2d"]),
        Opt("u", float, 3.0, "threshold level"),
        Opt("n_schedule", str, "2,4,8", "comma list of block sizes"),
        Opt("n_sims", int, 1_000_000, "simulated replicates"),
        Opt("independent_blocks", bool, False,
            "simulate each block independently (independence control)"),
        Opt("a", float, 1.0, "axis-1 correlation scale"),
        Opt("a2", float, 1.0, "axis-2 correlation scale"),
        Opt("alpha", float, 1.0, "axis-1 correlation exponent"),
        Opt("alpha2", float, 1.0, "axis-2 correlation exponent"),
        Opt("domain_t", float, 1.0, "observation window, axis 1"),
        Opt("domain_t2", float, 1.0, "observation window, axis 2"),
        Opt("points_per_v", int, 8, "grid nodes per local-scale unit"),
        Opt("sim_batch", int, 20_000, "simulated replicates per batch"),
    ],
    "oracle": [
        Opt("family", str, "parabola-sojourn", "closed-form family",
            choices=["parabola-sojourn", "brownian-sup"]),
        Opt("alpha", float, 2.0, "roughness exponent the caller expects"),
        Opt("x", str, "0", "comma list of sojourn sizes (parabola-sojourn)"),
        Opt("s", str, "1", "comma list of interval lengths"),
    ],
    "convergence": [
        Opt("alpha", float, 1.0, "roughness exponent"),
        Opt("x", float, 0.0, "sojourn size"),
        Opt("s_schedule", str, "4,8,16", "comma list of S values"),
        Opt("delta", float, 1.0 / 64, "grid step"),
        Opt("method", str, "tilted", "per-S estimator kernel",
            choices=["tilted", "plain"]),
        Opt("n_samples", int, 100_000, "Monte Carlo samples per S"),
    ],
}

CSV_NAMES = {
    "estimate-constant": "constants.csv",
    "run-experiment": "experiment.csv",
    "double-sum": "double_sum.csv",
    "oracle": "oracle.csv",
    "convergence": "convergence.csv",
}


def _floats(text):
    try:
        vals = [float(p) for p in str(text).split(",") if p.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated number list, got {text!r}")
    if not vals:
        raise ConfigError(f"empty number list {text!r}")
    return vals


def _fmt(v):
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    return f"{float(v):.12g}"


def _write_csv(path, schema, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {schema}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _drift(b, beta):
    return DriftSpec(b, beta) if b else DriftSpec()


def _rule_beta(drift):
    return drift.beta if drift.b > 0 else NO_DRIFT


# ---------------------------------------------------------------------------
# per-subcommand runners: each returns (header, rows, flags, stream_ids)

def _run_estimate_constant(cfg, workers):
    fam = cfg["family"]
    seed, n = cfg["seed"], cfg["n_samples"]
    header = ("route", "x", "value", "std_err", "S", "delta", "flags")
    if fam == "plain-1d":
        interval = _floats(cfg["interval"])
        if len(interval) != 2:
            raise ConfigError("--interval needs exactly lo,hi")
        est = estimate_berman_1d(cfg["alpha"],
                                 _drift(cfg["drift_b"], cfg["drift_beta"]),
                                 cfg["x"], tuple(interval),
                                 n_grid=cfg["n_grid"], n_samples=n, seed=seed,
                                 workers=workers,
                                 refine_check=cfg["refine_check"],
                                 chunk_size=cfg["chunk_size"])
        rows = [("plain", cfg["x"], est.value, est.std_err,
                 interval[1] - interval[0], est.grid_step,
                 ";".join(est.flags))]
        n_chunks = math.ceil(n / cfg["chunk_size"])
        streams = {"main": mc.stream_ids(seed, n_chunks)}
        return header, rows, list(est.flags), streams
    if fam in ("limit-1d", "pickands"):
        sched = _floats(cfg["s_schedule"])
        x = 0.0 if fam == "pickands" else cfg["x"]
        if fam == "pickands":
            est = estimate_pickands(cfg["alpha"], tuple(sched), n, seed,
                                    delta=cfg["delta"], method=cfg["method"],
                                    workers=workers,
                                    chunk_size=cfg["chunk_size"])
        else:
            est = estimate_berman_1d_limit(cfg["alpha"], x, tuple(sched), n,
                                           seed, delta=cfg["delta"],
                                           method=cfg["method"],
                                           workers=workers,
                                           chunk_size=cfg["chunk_size"])
        rows = [("limit", x, est.value, est.std_err, sched[-1], cfg["delta"],
                 ";".join(est.flags))]
        streams = {f"S={S:g}": mc.derive_seed(seed, i)
                   for i, S in enumerate(sched)}
        return header, rows, list(est.flags), streams
    if fam == "plain-2d":
        d1 = _drift(cfg["drift_b"], cfg["drift_beta"])
        d2 = _drift(cfg["drift2_b"], cfg["drift2_beta"])
        rule = DomainRule(cfg["rule_s"], cfg["alpha"], beta1=_rule_beta(d1),
                          alpha2=cfg["alpha2"], beta2=_rule_beta(d2))
        est = estimate_berman_2d(cfg["alpha"], cfg["alpha2"], d1, d2,
                                 cfg["x"], rule, n_samples=n, seed=seed,
                                 n_grid_axis=cfg["n_grid_axis"],
                                 workers=workers,
                                 chunk_size=cfg["chunk_size"])
        rows = [("plain-2d", cfg["x"], est.value, est.std_err, rule.S,
                 est.grid_step, ";".join(est.flags))]
        n_chunks = math.ceil(n / cfg["chunk_size"])
        streams = {"main": mc.stream_ids(seed, n_chunks)}
        return header, rows, list(est.flags), streams
    if fam == "bhat":
        alphas = _floats(cfg["alphas"])
        sched = _floats(cfg["s_schedule"])
        direct, product = estimate_bhat(alphas, cfg["x"], cfg["n1"],
                                        tuple(sched), n, seed,
                                        delta1=cfg["delta1"],
                                        delta_rest=cfg["delta_rest"],
                                        workers=workers,
                                        chunk_size=cfg["chunk_size"])
        rows = [("direct", cfg["x"], direct.value, direct.std_err, cfg["n1"],
                 direct.grid_step, ";".join(direct.flags)),
                ("product", cfg["x"], product.value, product.std_err,
                 cfg["n1"], product.grid_step, ";".join(product.flags))]
        streams = {"direct": [mc.derive_seed(seed, i)
                              for i in range(len(sched))],
                   "product-factors": [mc.derive_seed(seed, 100 + i)
                                       for i in range(len(alphas) - 1)],
                   "product-plain": mc.derive_seed(seed, 200)}
        return header, rows, list(direct.flags) + list(product.flags), streams
    raise ConfigError(f"unknown estimate-constant family {fam!r}")


def _experiment_family(cfg):
    fam = cfg["family"]
    if fam == "stationary-1d":
        return Stationary1D(cfg["a"], cfg["alpha"])
    if fam == "stationary-2d":
        return Stationary2D(cfg["a"], cfg["a2"], cfg["alpha"], cfg["alpha2"])
    if fam == "one-point-2d":
        return OnePoint2D(cfg["a"], cfg["a2"], cfg["alpha"], cfg["alpha2"],
                          cfg["b1"], cfg["b2"], cfg["beta1"], cfg["beta2"])
    if fam == "chi":
        return ChiFamily(cfg["a"], cfg["alpha"], cfg["chi_m"])
    if fam == "queue":
        return QueueFamily(cfg["alpha"], cfg["c"])
    raise ConfigError(f"unknown experiment family {fam!r}")


def _experiment_settings(cfg):
    return ExperimentSettings(
        domain_T=cfg["domain_t"], domain_T2=cfg["domain_t2"],
        points_per_v=cfg["points_per_v"], sim_batch=cfg["sim_batch"],
        max_sims=cfg["max_sims"], target_S=cfg["target_s"],
        target_S_2d=cfg["target_s_2d"], target_samples=cfg["target_samples"],
        queue_T=cfg["queue_t"], queue_M=cfg["queue_m"])


def _run_experiment(cfg, workers):
    family = _experiment_family(cfg)
    settings = _experiment_settings(cfg)
    levels = _floats(cfg["u"])
    xg = _floats(cfg["x_grid"])
    header = ("u", "x", "ratio_hat", "ci_lo", "ci_hi", "target", "target_se")
    rows, flags, streams = [], [], {}
    for i, u in enumerate(levels):
        seed_u = mc.derive_seed(cfg["seed"], 1000 + i)
        streams[f"u={u:g}"] = seed_u
        res = conditional_sojourn_cdf(family, settings, u, xg,
                                      n_target_conditioned=cfg["n_conditioned"],
                                      seed=seed_u, workers=workers)
        for j, x in enumerate(res.x_grid):
            rows.append((u, x, res.ratio_hat[j], res.ci_lo[j], res.ci_hi[j],
                         res.target_curve[j], res.target_se[j]))
        for fl in res.flags:
            note = f"u={u:g}: {fl}"
            if fl == "low-confidence":
                note += f" (n_conditioned={res.n_conditioned})"
            if fl == "excluded-near-horizon":
                dropped = ",".join(f"{x:g}"
                                   for x in res.metadata["excluded_x"])
                note += (f" (x rows {dropped} are within one grid step of "
                         "the window end and have no stable limit)")
            flags.append(note)
    return header, rows, flags, streams


def _run_double_sum(cfg, workers):
    family = _experiment_family(cfg)
    settings = ExperimentSettings(
        domain_T=cfg["domain_t"], domain_T2=cfg["domain_t2"],
        points_per_v=cfg["points_per_v"], sim_batch=cfg["sim_batch"])
    sched = _floats(cfg["n_schedule"])
    res = double_sum_diagnostic(family, cfg["u"], tuple(sched), cfg["seed"],
                                settings=settings, n_sims=cfg["n_sims"],
                                independent_blocks=cfg["independent_blocks"])
    header = ("n", "ratio", "std_err", "joint", "single", "blocks")
    rows = [(res.n_schedule[i], res.ratios[i], res.std_errs[i],
             res.joint_counts[i], res.single_counts[i], res.n_blocks[i])
            for i in range(len(res.n_schedule))]
    return header, rows, [], {"main": cfg["seed"]}


def _run_oracle(cfg, workers):
    fam = cfg["family"]
    header = ("x", "S", "value")
    if fam == "parabola-sojourn":
        if cfg["alpha"] != 2.0:
            raise ConfigError(
                "no closed-form oracle; use --family brownian-sup checks")
        rows = [(x, S, parabola_constant_closed_form(x, S))
                for S in _floats(cfg["s"]) for x in _floats(cfg["x"])]
        return header, rows, [], {}
    if fam == "brownian-sup":
        if any(x != 0.0 for x in _floats(cfg["x"])):
            raise ConfigError("the brownian-sup oracle covers x = 0 only")
        rows = [(0.0, S, brownian_sup_oracle(S)) for S in _floats(cfg["s"])]
        return header, rows, [], {}
    raise ConfigError(f"unknown oracle family {fam!r}")


def _run_convergence(cfg, workers):
    sched = _floats(cfg["s_schedule"])
    est = estimate_berman_1d_limit(cfg["alpha"], cfg["x"], tuple(sched),
                                   cfg["n_samples"], cfg["seed"],
                                   delta=cfg["delta"], method=cfg["method"],
                                   workers=workers)
    per_s = est.metadata["per_S"]
    fit = mc.fit_line([s for s, _, _ in per_s], [v for _, v, _ in per_s],
                      [se for _, _, se in per_s])
    header = ("S", "value", "std_err", "slope", "slope_se", "intercept",
              "intercept_se")
    rows = [(S, v, se, fit.slope, fit.slope_se, fit.intercept,
             fit.intercept_se) for S, v, se in per_s]
    streams = {f"S={S:g}": mc.derive_seed(cfg["seed"], i)
               for i, S in enumerate(sched)}
    return header, rows, list(est.flags), streams


RUNNERS = {
    "estimate-constant": _run_estimate_constant,
    "run-experiment": _run_experiment,
    "double-sum": _run_double_sum,
    "oracle": _run_oracle,
    "convergence": _run_convergence,
}


# ---------------------------------------------------------------------------
# option resolution

def build_parser():
    parser = argparse.ArgumentParser(
        prog="sojournlab",
        description="Sojourn-time constants and high-level experiments for "
                    "Gaussian-related fields.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name, opts in SUBCOMMAND_OPTS.items():
        sp = subs.add_parser(name, help=f"run the {name} table")
        sp.add_argument("--config", default=None,
                        help="JSON file with option defaults")
        sp.add_argument("--from-manifest", default=None,
                        help="replay the configuration of a recorded manifest")
        sp.add_argument("--seed", dest="seed", type=int,
                        default=argparse.SUPPRESS,
                        help="base RNG seed; drawn and recorded if omitted")
        sp.add_argument("--workers", type=int, default=1,
                        help="process count for chunked estimators")
        sp.add_argument("--out", default="sojournlab-out",
                        help="output directory")
        for opt in opts:
            opt.add_to(sp)
    return parser


def resolve_config(sub, ns):
    """Layered option resolution: defaults, config file, env, flags."""
    opts = {o.dest: o for o in SUBCOMMAND_OPTS[sub] + SEMANTIC_GLOBALS}
    cfg = {d: o.default for d, o in opts.items()}

    if ns.config and ns.from_manifest:
        raise ConfigError("--config and --from-manifest are mutually exclusive")
    file_layer = {}
    if ns.from_manifest:
        try:
            with open(ns.from_manifest) as fh:
                manifest = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read manifest: {e}")
        if manifest.get("subcommand") != sub:
            raise ConfigError(
                f"manifest records subcommand {manifest.get('subcommand')!r}, "
                f"not {sub!r}")
        file_layer = manifest.get("config", {})
    elif ns.config:
        try:
            with open(ns.config) as fh:
                file_layer = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}")
        if not isinstance(file_layer, dict):
            raise ConfigError("config file must hold a JSON object")
    for key, val in file_layer.items():
        if key not in opts:
            raise ConfigError(f"unknown config key {key!r} for {sub}")
        cfg[key] = opts[key].coerce(val)

    for dest, opt in opts.items():
        raw = os.environ.get(ENV_PREFIX + dest.upper())
        if raw is not None:
            try:
                cfg[dest] = opt.coerce(raw)
            except ValueError:
                raise ConfigError(
                    f"bad value {raw!r} for {ENV_PREFIX + dest.upper()}")

    for dest in opts:
        if hasattr(ns, dest):
            cfg[dest] = getattr(ns, dest)

    if cfg.get("seed") is None:
        cfg["seed"] = secrets.randbits(63)
    return cfg


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    sub = ns.subcommand
    try:
        cfg = resolve_config(sub, ns)
        t0 = time.perf_counter()
        header, rows, flags, streams = RUNNERS[sub](cfg, ns.workers)
        elapsed = time.perf_counter() - t0
    except (ConfigError, ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except mc.NumericFailure as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3

    os.makedirs(ns.out, exist_ok=True)
    csv_name = CSV_NAMES[sub]
    schema = f"sojournlab-{csv_name[:-4].replace('_', '-')}-v1"
    _write_csv(os.path.join(ns.out, csv_name), schema, header, rows)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "subcommand": sub,
        "config": cfg,
        "outputs": {"table": csv_name},
        "stream_ids": streams,
        "flags": flags,
        "wall_time_s": round(elapsed, 3),
    }
    with open(os.path.join(ns.out, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    for fl in flags:
        print(f"note: {fl}", file=sys.stderr)
    print(os.path.join(ns.out, csv_name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
