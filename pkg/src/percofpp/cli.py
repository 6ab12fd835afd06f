"""Command-line runs with reproducibility manifests.

Every run resolves its configuration from defaults, then a key=value file,
then PERCOFPP_* environment variables, then flags, and echoes the resolved
values into run_manifest.json next to the CSV outputs. Reruns driven by a
manifest take the configuration from the manifest alone, which is what
makes byte-identical reproduction a testable contract: CSVs carry no
timestamps, floats are written with repr, and infinities print as 'inf'.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .animals import bernoulli_field, bound_check, gamma_max, indicator_from_radius
from .environment import CoupledEnvironment, WeightLaw, derive_seed
from .estimators import (
    BUILTIN_RUSSO,
    ExperimentConfig,
    bypass_cases,
    delta_estimator,
    lipschitz_scan,
    mu_estimate,
    russo_exact_check,
    slln_diagnostic,
    tail_suite,
    truncation_gap,
)
from .lattice import BoxRegion, box_edges
from .radius import RadiusParams, radius_tail

ENV_PREFIX = "PERCOFPP_"

SUBCOMMANDS = (
    "sample",
    "mu",
    "lipschitz",
    "russo",
    "delta",
    "radius-tails",
    "gap",
    "animals",
    "bypass-demo",
    "slln",
    "tails",
)


class ConfigError(ValueError):
    """Invalid or unknown configuration; exits with status 2."""


# ---------------------------------------------------------------------------
# typed configuration keys

def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_ints(text) -> Tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(","))


def _parse_floats(text) -> Tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(","))


_TYPES = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _parse_bool,
    "ints": _parse_ints,
    "floats": _parse_floats,
}

# key -> (type name, default, help); None defaults mean "derived at run time"
KEYS: Dict[str, Tuple[str, object, str]] = {
    "d": ("int", 2, "lattice dimension"),
    "dist": ("str", "dirac:1.0", "weight law F: dirac:V | atoms:V:M,... | uniform:A:B"),
    "p": ("float", 0.85, "openness density"),
    "p-grid": ("floats", None, "comma list of p values (scans)"),
    "p0": ("float", None, "density floor fixing the q threshold (default: min p used)"),
    "delta0": ("float", 0.05, "target bound on p - q"),
    "lambda": ("float", None, "q threshold override (default from p0, delta0)"),
    "n": ("int", 32, "distance scale"),
    "n-grid": ("ints", None, "comma list of n values"),
    "m-override": ("float", None, "truncation level override (default (log n)^3)"),
    "k-override": ("int", None, "restriction box radius override (default n^2)"),
    "replicas": ("int", 100, "Monte Carlo replica count"),
    "seed": ("int", 0, "master seed"),
    "window-policy": ("str", "tight", "regularization window sizing: tight | wide"),
    "window": ("int", None, "environment window radius override"),
    "jobs": ("int", 0, "parallelism degree; 0 = available cores (results do not depend on it)"),
    "regularized": ("bool", False, "also estimate the regularized time"),
    "instance": ("str", "all", "russo instance: all | single-edge | square | grid-2x3"),
    "grid": ("floats", (0.3, 0.5, 0.7), "p grid for the russo identity check"),
    "h": ("float", 0.02, "finite-difference half width"),
    "delta-mode": ("str", "cap", "minus-variant of the edge perturbation: cap | resample"),
    "max-edges": ("int", 512, "geodesic edge subsample size"),
    "spot-checks": ("int", 20, "off-geodesic probes per replica"),
    "nmax": ("int", 32, "largest annulus scale before censoring"),
    "span-factor": ("int", 10, "linkage budget multiplier C*"),
    "stretch": ("int", 1, "certificate aspect parameter rho"),
    "radius-mode": ("str", "auto", "radius search: auto | exact | certificate"),
    "t-grid": ("ints", (3, 4, 5, 6), "survival thresholds"),
    "trunc": ("float", None, "weight truncation H for radius geodesics (default (log 64)^3)"),
    "mode": ("str", "bernoulli", "animal indicators: bernoulli | radius"),
    "field-n": ("int", 2, "indicator scale N"),
    "field-q": ("float", 0.1, "indicator mean bound q_N (bernoulli mode)"),
    "l-grid": ("ints", (6, 10, 14), "animal length caps"),
    "cases": ("int", 20, "bypass cases to sample"),
    "span": ("int", 32, "half length of sampled geodesics (bypass demo)"),
    "translates": ("int", 20, "stations per translate set"),
    "spacing": ("int", 32, "translate spacing"),
    "kesten-paths": ("int", 25, "sampled open paths per seed"),
    "kesten-length": ("int", None, "sampled path length (default 2n)"),
    "radius": ("int", 4, "box radius for weight sampling"),
}

_COMMON = ("d", "dist", "seed", "window", "jobs")
_FAMILY = _COMMON + ("p", "p0", "delta0", "lambda", "replicas", "window-policy")

SUBCOMMAND_KEYS: Dict[str, Tuple[str, ...]] = {
    "sample": _COMMON + ("p", "p0", "delta0", "lambda", "radius"),
    "mu": _FAMILY + ("n", "m-override", "k-override", "regularized"),
    "lipschitz": _FAMILY + ("p-grid", "n", "m-override", "k-override"),
    "russo": ("instance", "grid"),
    "delta": _FAMILY + (
        "n", "m-override", "k-override", "h", "delta-mode", "max-edges", "spot-checks",
    ),
    "radius-tails": _FAMILY + (
        "t-grid", "nmax", "span-factor", "stretch", "radius-mode", "trunc",
    ),
    "gap": _FAMILY + ("n-grid", "m-override", "k-override"),
    "animals": _COMMON + (
        "p", "p0", "delta0", "lambda", "replicas", "mode", "field-n", "field-q",
        "l-grid", "nmax", "span-factor", "stretch", "trunc",
    ),
    "bypass-demo": _FAMILY + (
        "cases", "span", "nmax", "span-factor", "stretch", "radius-mode", "trunc",
    ),
    "slln": _FAMILY + ("n-grid", "translates", "spacing"),
    "tails": _FAMILY + (
        "n", "m-override", "k-override", "kesten-paths", "kesten-length",
    ),
}


def _flag_name(key: str) -> str:
    return "--" + key


def _dest(key: str) -> str:
    return key.replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="percofpp",
        description="first-passage percolation experiments with manifest-backed runs",
    )
    parser.add_argument("--version", action="version", version=f"percofpp {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for sub in SUBCOMMANDS:
        sp = subs.add_parser(sub, help=f"run the {sub} experiment")
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--out", default="runs", help="parent directory for run directories")
        sp.add_argument(
            "--from-manifest",
            dest="from_manifest",
            help="reproduce a previous run; all other configuration is ignored",
        )
        for key in SUBCOMMAND_KEYS[sub]:
            tname, default, help_text = KEYS[key]
            if tname == "bool":
                sp.add_argument(
                    _flag_name(key), dest=_dest(key), action="store_const",
                    const=True, default=None, help=help_text,
                )
            else:
                sp.add_argument(
                    _flag_name(key), dest=_dest(key), default=None,
                    help=f"{help_text} (default {default})",
                )
    return parser


def _coerce(key: str, raw) -> object:
    tname, _, _ = KEYS[key]
    if raw is None:
        return None
    try:
        return _TYPES[tname](raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None


def _read_config_file(path: str, allowed: Sequence[str]) -> Dict[str, object]:
    try:
        text = open(path, "r", encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    out: Dict[str, object] = {}
    unknown = []
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in allowed:
            unknown.append(key)
            continue
        out[key] = _coerce(key, value)
    if unknown:
        raise ConfigError(
            f"unknown configuration key(s) in {path}: {', '.join(sorted(unknown))}"
        )
    return out


def _read_env(allowed: Sequence[str]) -> Dict[str, object]:
    out: Dict[str, object] = {}
    known = {key.upper().replace("-", "_"): key for key in KEYS}
    for name, value in os.environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        suffix = name[len(ENV_PREFIX):]
        key = known.get(suffix)
        if key is None:
            raise ConfigError(f"unknown configuration key in environment: {name}")
        if key in allowed:
            out[key] = _coerce(key, value)
    return out


def resolve_config(sub: str, args: argparse.Namespace) -> Dict[str, object]:
    """defaults < config file < PERCOFPP_* environment < flags."""
    allowed = SUBCOMMAND_KEYS[sub]
    cfg = {key: KEYS[key][1] for key in allowed}
    if getattr(args, "config", None):
        cfg.update(_read_config_file(args.config, allowed))
    cfg.update(_read_env(allowed))
    for key in allowed:
        raw = getattr(args, _dest(key), None)
        if raw is not None:
            cfg[key] = _coerce(key, raw)
    return cfg


# ---------------------------------------------------------------------------
# shared construction helpers

def _experiment(cfg: Dict[str, object]) -> ExperimentConfig:
    law = WeightLaw.parse(cfg["dist"])
    p_grid = cfg.get("p-grid") or (cfg.get("p", 0.85),)
    n_grid = cfg.get("n-grid") or (cfg.get("n", 32),)
    p0 = cfg.get("p0")
    if p0 is None:
        p0 = min(p_grid)
    try:
        return ExperimentConfig(
            d=cfg["d"],
            law=law,
            p_grid=tuple(p_grid),
            p0=float(p0),
            n_grid=tuple(sorted(set(n_grid))),
            delta0=cfg.get("delta0", 0.05),
            lam=cfg.get("lambda"),
            M_override=cfg.get("m-override"),
            K_override=cfg.get("k-override"),
            replicas=cfg.get("replicas", 100),
            master_seed=cfg["seed"],
            window_policy=cfg.get("window-policy", "tight"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _radius_params(cfg: Dict[str, object]) -> RadiusParams:
    trunc = cfg.get("trunc")
    if trunc is None:
        trunc = math.log(64) ** 3
    return RadiusParams(
        H=float(trunc),
        span_factor=cfg.get("span-factor", 10),
        stretch=cfg.get("stretch", 1),
        nmax=cfg.get("nmax", 32),
    )


def _check_window(cfg: Dict[str, object], required: int) -> None:
    window = cfg.get("window")
    if window is not None and int(window) < required:
        raise ConfigError(
            f"window radius {window} too small for this run; "
            f"the minimal window radius is {required}"
        )


def _replica_seeds(cfg: Dict[str, object]) -> List[int]:
    reps = int(cfg.get("replicas") or cfg.get("cases") or 0)
    seed = int(cfg["seed"]) if "seed" in cfg else 0
    return [derive_seed(seed, i) for i in range(reps)]


# ---------------------------------------------------------------------------
# runners: each returns {csv filename: (header, rows)}

Rows = Dict[str, Tuple[List[str], List[List[object]]]]


def _run_sample(cfg) -> Rows:
    law = WeightLaw.parse(cfg["dist"])
    exp = _experiment(cfg)
    params = exp.params(cfg["p"])
    r = int(cfg["radius"])
    _check_window(cfg, r + 1)
    window = BoxRegion((0,) * cfg["d"], max(r + 1, cfg.get("window") or 0))
    env = CoupledEnvironment(window=window, seed=cfg["seed"], law=law)
    header = ["x", "y", "axis", "u", "v", "weight", "p_open", "q_open"]
    rows = []
    for e in box_edges(BoxRegion((0,) * cfg["d"], r)):
        u, v = env.uniform_pair(e)
        rows.append([
            ";".join(str(c) for c in e.x),
            ";".join(str(c) for c in e.y),
            e.axis,
            u,
            v,
            env.weight(e, params.p),
            env.is_p_open(e, params.p),
            env.is_q_open(e, params.p, params.lam),
        ])
    return {"sample.csv": (header, rows)}


def _run_mu(cfg) -> Rows:
    exp = _experiment(cfg)
    n = int(cfg["n"])
    _check_window(cfg, exp.restriction(n))
    est = mu_estimate(exp, cfg["p"], n, regularized=bool(cfg["regularized"]))
    header = [
        "p", "n", "replicas", "excluded", "mean", "stderr",
        "mean_regularized", "stderr_regularized",
    ]
    rows = [[
        est.p, est.n, est.replicas, est.excluded, est.mean, est.stderr,
        est.mean_regularized, est.stderr_regularized,
    ]]
    return {"mu.csv": (header, rows)}


def _run_lipschitz(cfg) -> Rows:
    exp = _experiment(cfg)
    if len(exp.p_grid) < 2:
        raise ConfigError("lipschitz needs a p-grid with at least two points")
    n = int(cfg["n"])
    _check_window(cfg, exp.restriction(n))
    scan = lipschitz_scan(exp, n=n)
    header = [
        "p_low", "p_high", "slope", "stderr", "mu_low", "mu_high",
        "se_low", "se_high", "monotone", "violations", "replicas", "n",
    ]
    rows = []
    for i, row in enumerate(scan.slopes):
        rows.append([
            row.p_low, row.p_high, row.slope, row.stderr,
            scan.means[i], scan.means[i + 1], scan.stderrs[i], scan.stderrs[i + 1],
            scan.monotone, scan.violations, scan.replicas, scan.n,
        ])
    return {"lipschitz.csv": (header, rows)}


def _run_russo(cfg) -> Rows:
    name = cfg["instance"]
    if name == "all":
        makers = [BUILTIN_RUSSO[k] for k in ("single-edge", "square", "grid-2x3")]
    elif name in BUILTIN_RUSSO:
        makers = [BUILTIN_RUSSO[name]]
    else:
        raise ConfigError(
            f"unknown russo instance {name!r}; choose from "
            f"all, {', '.join(sorted(BUILTIN_RUSSO))}"
        )
    header = ["instance", "p", "lhs", "rhs", "discrepancy", "states"]
    rows = []
    for maker in makers:
        rep = russo_exact_check(maker(), cfg["grid"])
        for i, p in enumerate(rep.p_grid):
            rows.append([rep.name, p, rep.lhs[i], rep.rhs[i], rep.discrepancy[i], rep.states])
    return {"russo.csv": (header, rows)}


def _run_delta(cfg) -> Rows:
    exp = _experiment(cfg)
    n = int(cfg["n"])
    _check_window(cfg, exp.restriction(n))
    mode = cfg["delta-mode"]
    if mode not in ("cap", "resample"):
        raise ConfigError("delta-mode must be cap or resample")
    rep = delta_estimator(
        exp, cfg["p"], n, h=cfg["h"], mode=mode,
        max_edges=cfg["max-edges"], spot_checks=cfg["spot-checks"],
    )
    header = [
        "p", "n", "h", "p_low", "p_high", "mode", "fd_mean", "fd_stderr",
        "sum_mean", "sum_stderr", "fd_over_n", "sum_over_n",
        "mean_subsample_factor", "mean_geodesic_edges",
        "spot_checks", "spot_failures", "replicas",
    ]
    rows = [[
        rep.p, rep.n, rep.h, rep.p_low, rep.p_high, rep.mode,
        rep.fd_mean, rep.fd_stderr, rep.sum_mean, rep.sum_stderr,
        rep.fd_over_n, rep.sum_over_n, rep.mean_subsample_factor,
        rep.mean_geodesic_edges, rep.spot_checks, rep.spot_failures, rep.replicas,
    ]]
    return {"delta.csv": (header, rows)}


def _run_radius_tails(cfg) -> Rows:
    exp = _experiment(cfg)
    params = exp.params(cfg["p"])
    rp = _radius_params(cfg)
    _check_window(cfg, rp.span_factor * rp.nmax + 2)
    mode = cfg["radius-mode"]
    if mode not in ("auto", "exact", "certificate"):
        raise ConfigError("radius-mode must be auto, exact or certificate")
    table = radius_tail(exp.seeds(), params, rp, cfg["t-grid"], mode=mode)
    header = ["t", "n_ge_t", "total", "censored", "survival"]
    rows = [
        [t, k, table.n_total, table.n_censored, k / table.n_total]
        for t, k in zip(table.t_grid, table.n_ge_t)
    ]
    return {"radius_tails.csv": (header, rows)}


def _run_gap(cfg) -> Rows:
    exp = _experiment(cfg)
    n_grid = cfg.get("n-grid") or exp.n_grid
    _check_window(cfg, max(exp.restriction(n) for n in n_grid))
    rows_out = truncation_gap(exp, p=cfg["p"], n_grid=n_grid)
    header = [
        "n", "replicas", "excluded", "total_mean", "total_stderr",
        "part_tm_mean", "part_tm_stderr", "part_tmk_mean", "part_tmk_stderr",
        "normalizer",
    ]
    rows = [[
        r.n, r.replicas, r.excluded, r.total_mean, r.total_stderr,
        r.part_tm_mean, r.part_tm_stderr, r.part_tmk_mean, r.part_tmk_stderr,
        r.normalizer,
    ] for r in rows_out]
    return {"gap.csv": (header, rows)}


def _run_animals(cfg) -> Rows:
    exp = _experiment(cfg)
    law = exp.law
    l_grid = tuple(cfg["l-grid"])
    box = BoxRegion((0,) * cfg["d"], max(l_grid) + 1)
    mode = cfg["mode"]
    n_field = int(cfg["field-n"])
    if mode == "bernoulli":
        _check_window(cfg, max(l_grid) + 1)

        def factory(i: int):
            env = CoupledEnvironment(
                window=box, seed=derive_seed(cfg["seed"], i), law=law
            )
            return bernoulli_field(env, box, n_field, cfg["field-q"])
    elif mode == "radius":
        if n_field < 4:
            raise ConfigError("radius-mode animals need field-n >= 4 (R >= 3 always)")
        params = exp.params(cfg["p"])
        rp = _radius_params(cfg)
        reach = max(l_grid) + rp.span_factor * n_field + 4
        _check_window(cfg, reach)
        need = BoxRegion((0,) * cfg["d"], reach)

        def factory(i: int):
            env = CoupledEnvironment(
                window=need, seed=derive_seed(cfg["seed"], i), law=law
            )
            return indicator_from_radius(
                env, params, rp, n_field, box, mean_bound=cfg["field-q"]
            )
    else:
        raise ConfigError("mode must be bernoulli or radius")
    rows_out = bound_check(factory, l_grid, exp.replicas)
    header = ["L", "N", "q_N", "mean_gamma", "stderr", "ratio"]
    rows = [[r.L, r.N, r.q_N, r.mean_gamma, r.stderr, r.ratio] for r in rows_out]
    return {"animals.csv": (header, rows)}


def _run_bypass_demo(cfg) -> Rows:
    exp = _experiment(cfg)
    params = exp.params(cfg["p"])
    rp = _radius_params(cfg)
    span = int(cfg["span"])
    _check_window(cfg, rp.span_factor * rp.nmax + span + 4)
    mode = cfg["radius-mode"]
    if mode not in ("auto", "exact", "certificate"):
        raise ConfigError("radius-mode must be auto, exact or certificate")
    cases = bypass_cases(params, rp, int(cfg["cases"]), cfg["seed"], mode=mode, span=span)
    header = [
        "seed", "edge_x", "edge_y", "radius", "censored", "method",
        "feasible", "ok", "rejected", "extra_edges", "budget",
    ]
    rows = [[
        c.seed,
        ";".join(str(v) for v in c.edge.x),
        ";".join(str(v) for v in c.edge.y),
        c.radius, c.censored, c.method, c.feasible, c.ok, c.rejected,
        c.extra_edges, c.budget,
    ] for c in cases]
    return {"bypass.csv": (header, rows)}


def _run_slln(cfg) -> Rows:
    exp = _experiment(cfg)
    _check_window(cfg, 6 * exp.n_grid[-1] + 80)
    rep = slln_diagnostic(
        exp, p=cfg["p"], translates=cfg["translates"], spacing=cfg["spacing"]
    )
    header = ["n", "value", "flagged"]
    rows = [[pt.n, pt.value, pt.value is None] for pt in rep.points]
    meta_header = [
        "seed", "p", "translate_mean_first", "translate_mean_second",
        "translate_count", "translate_excluded", "spacing",
    ]
    meta = [[
        rep.seed, rep.p, rep.translate_mean_first, rep.translate_mean_second,
        rep.translate_count, rep.translate_excluded, rep.spacing,
    ]]
    return {"slln.csv": (header, rows), "slln_translates.csv": (meta_header, meta)}


def _run_tails(cfg) -> Rows:
    exp = _experiment(cfg)
    n = int(cfg["n"])
    _check_window(cfg, exp.restriction(n))
    suite = tail_suite(
        exp, p=cfg["p"], n=n,
        kesten_length=cfg.get("kesten-length"), kesten_paths=cfg["kesten-paths"],
    )
    header = ["table", "t", "count", "total", "strict"]
    rows = []
    for tab in (suite.hole, suite.overshoot, suite.length, suite.kesten.table):
        for t, c in zip(tab.t_grid, tab.counts):
            rows.append([tab.name, t, c, tab.total, tab.strict])
    meta_header = [
        "p", "n", "replicas", "excluded", "kesten_length", "kesten_paths",
        "kesten_seeds_with_paths", "kesten_min_ratio", "p_length_ge_4n",
    ]
    meta = [[
        suite.p, suite.n, suite.replicas, suite.excluded, suite.kesten.length,
        suite.kesten.paths_per_seed, suite.kesten.seeds_with_paths,
        suite.kesten.min_ratio, suite.p_length_ge_4n,
    ]]
    return {"tails.csv": (header, rows), "tails_meta.csv": (meta_header, meta)}


RUNNERS = {
    "sample": _run_sample,
    "mu": _run_mu,
    "lipschitz": _run_lipschitz,
    "russo": _run_russo,
    "delta": _run_delta,
    "radius-tails": _run_radius_tails,
    "gap": _run_gap,
    "animals": _run_animals,
    "bypass-demo": _run_bypass_demo,
    "slln": _run_slln,
    "tails": _run_tails,
}


# ---------------------------------------------------------------------------
# CSV + manifest plumbing

def _format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_csv(path: str, header: List[str], rows: List[List[object]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_format_cell(v) for v in row])


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def _run_directory(parent: str, sub: str, seed: int) -> str:
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    base = os.path.join(parent, f"{sub}-{seed}-{stamp}")
    path = base
    k = 1
    while os.path.exists(path):
        k += 1
        path = f"{base}-{k}"
    os.makedirs(path)
    return path


def execute(sub: str, cfg: Dict[str, object], out_parent: str) -> str:
    """Run one subcommand, write CSVs and the manifest, return the run dir."""
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    tables = RUNNERS[sub](cfg)
    run_dir = _run_directory(out_parent, sub, int(cfg.get("seed", 0)))
    digests = {}
    for name in sorted(tables):
        header, rows = tables[name]
        path = os.path.join(run_dir, name)
        _write_csv(path, header, rows)
        digests[name] = _sha256(path)
    manifest = {
        "tool": "percofpp",
        "version": __version__,
        "subcommand": sub,
        "config": {k: _jsonable(v) for k, v in sorted(cfg.items())},
        "master_seed": int(cfg.get("seed", 0)),
        "replica_seeds": _replica_seeds(cfg),
        "started_utc": started,
        "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": digests,
    }
    with open(os.path.join(run_dir, "run_manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return run_dir


def _config_from_manifest(path: str, sub: str) -> Dict[str, object]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    if manifest.get("subcommand") != sub:
        raise ConfigError(
            f"manifest {path} was written by subcommand "
            f"{manifest.get('subcommand')!r}, not {sub!r}"
        )
    allowed = SUBCOMMAND_KEYS[sub]
    cfg = {}
    for key, value in manifest.get("config", {}).items():
        if key not in allowed:
            raise ConfigError(f"unknown configuration key in manifest: {key}")
        cfg[key] = _coerce(key, value) if value is not None else None
    missing = [k for k in allowed if k not in cfg]
    if missing:
        raise ConfigError(f"manifest is missing key(s): {', '.join(missing)}")
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = args.subcommand
    try:
        if args.from_manifest:
            cfg = _config_from_manifest(args.from_manifest, sub)
        else:
            cfg = resolve_config(sub, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        run_dir = execute(sub, cfg, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the contract is exit status 3
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(run_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
