"""Experiment orchestration: configs, reports, and the suite runner.

A config names an instance, a scheme and a trial budget; runners produce a
flat summary dict (for checks) plus one CSV table (for plotting). Reports
are deterministic byte-for-byte given the same config and seed: wall-clock
timing goes to a separate sidecar file so data files can be compared.
"""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import correlation_gap
from .graph import FAMILIES, Graph, generate
from .hardness import hardness_trajectory, m_de
from .numerics import wilson_interval
from .recursive import (
    fill_tables,
    required_samples,
    simulate_edge,
    simulate_rank1,
    simulate_vertex,
)
from .selection import EDGE_KINDS, INFINITE, edge_selection, vertex_selection
from .two_phase import find_t0, simulate_two_phase

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "SuiteResult",
    "validate_config",
    "resolve_instance",
    "estimate_selectability",
    "exact_selection_profile",
    "run_experiment",
    "write_report",
    "run_suite",
]

CSV_VERSION = "crslab-report v1"
KINDS = ("selectability", "profile", "gap", "hardness")
SCHEMES = ("recursive-vertex", "recursive-edge", "rank1-closed", "two-phase", "greedy")
PROFILE_SCHEMES = ("recursive-vertex", "recursive-edge", "rank1-closed")
UNDERPOWERED_COUNT = 100
CHECK_OPS = (">=", "<=", ">", "<", "==", "!=")
_NAME_RE = re.compile(r"^[A-Za-z0-9._-]+$")

_PARAM_KEYS = {
    "recursive-vertex": {"g", "T", "delta", "Q"},
    "recursive-edge": {"selection", "T", "delta", "Q"},
    "rank1-closed": set(),
    "two-phase": {"t"},
    "greedy": {"t_max"},
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    instance: dict
    scheme: str
    trials: int
    seed: int
    bins: int = 20
    params: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("experiment: must be an object")
        known = {"name", "kind", "instance", "scheme", "trials", "seed", "bins", "params", "checks"}
        for key in raw:
            if key not in known:
                raise ConfigError(f"{key}: unknown field")
        try:
            cfg = cls(
                name=raw.get("name", ""),
                kind=raw.get("kind", ""),
                instance=raw.get("instance", {}),
                scheme=raw.get("scheme", ""),
                trials=raw.get("trials", 0),
                seed=raw.get("seed", -1),
                bins=raw.get("bins", 20),
                params=raw.get("params", {}),
                checks=raw.get("checks", []),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        validate_config(cfg)
        return cfg

    def echo(self) -> dict:
        """Config as a plain JSON-ready dict (normalized field order)."""
        return {
            "name": self.name,
            "kind": self.kind,
            "instance": dict(self.instance),
            "scheme": self.scheme,
            "trials": int(self.trials),
            "seed": int(self.seed),
            "bins": int(self.bins),
            "params": dict(self.params),
            "checks": [dict(c) for c in self.checks],
        }


def _as_int(value, fld: str, lo: int | None = None, hi: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{fld}: integer required")
    if isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{fld}: integer required")
    value = int(value)
    if lo is not None and value < lo:
        raise ConfigError(f"{fld}: must be >= {lo}")
    if hi is not None and value > hi:
        raise ConfigError(f"{fld}: must be <= {hi}")
    return value


def _as_float(value, fld: str, lo: float, hi: float) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{fld}: number required")
    value = float(value)
    if not (lo <= value <= hi):
        raise ConfigError(f"{fld}: must lie in [{lo}, {hi}]")
    return value


def _girth_param(params: dict):
    g = params.get("g", "infinite")
    if isinstance(g, str):
        if g.lower() in ("inf", "infinite", "infinity"):
            return INFINITE
        try:
            g = int(g)
        except ValueError as exc:
            raise ConfigError("params.g: odd integer >= 3 or 'infinite'") from exc
    if g == INFINITE:
        return INFINITE
    g = _as_int(g, "params.g", lo=3)
    if g % 2 == 0:
        raise ConfigError("params.g: odd integer >= 3 or 'infinite'")
    return g


def _t_param(params: dict) -> float:
    t = params.get("t")
    if t is None:
        raise ConfigError("params.t: required for scheme two-phase")
    if t == "t0":
        return find_t0()
    return _as_float(t, "params.t", 0.0, 1.0)


def validate_config(cfg: ExperimentConfig) -> None:
    if not cfg.name or not _NAME_RE.match(cfg.name):
        raise ConfigError("name: non-empty [A-Za-z0-9._-]+ required")
    if cfg.kind not in KINDS:
        raise ConfigError(f"kind: must be one of {KINDS}")
    _as_int(cfg.trials, "trials", lo=1)
    _as_int(cfg.bins, "bins", lo=1)
    _as_int(cfg.seed, "seed", lo=0, hi=2**64 - 1)
    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"scheme: must be one of {SCHEMES}")
    if cfg.kind == "profile" and cfg.scheme not in PROFILE_SCHEMES:
        raise ConfigError(f"scheme: kind=profile requires an exact-selection scheme {PROFILE_SCHEMES}")
    if cfg.kind == "gap" and cfg.scheme != "recursive-vertex":
        raise ConfigError("scheme: kind=gap requires scheme recursive-vertex")
    if cfg.kind == "hardness":
        if cfg.scheme != "greedy":
            raise ConfigError("scheme: kind=hardness requires scheme greedy")
    elif cfg.scheme == "greedy":
        raise ConfigError("scheme: greedy is only valid for kind=hardness")
    if not isinstance(cfg.params, dict):
        raise ConfigError("params: must be an object")
    allowed = set(_PARAM_KEYS[cfg.scheme])
    if cfg.kind == "gap":
        allowed |= {"u", "v", "t_k"}
    for key in cfg.params:
        if key not in allowed:
            raise ConfigError(f"params.{key}: not a parameter of scheme {cfg.scheme}")
    if cfg.scheme in ("recursive-vertex", "recursive-edge"):
        _as_int(cfg.params.get("T", 0), "params.T", lo=1)
        delta = _as_float(cfg.params.get("delta", -1.0), "params.delta", 0.0, 1.0)
        if delta >= 1.0:
            raise ConfigError("params.delta: must lie in [0, 1)")
        if "Q" in cfg.params:
            _as_int(cfg.params["Q"], "params.Q", lo=1)
        elif delta == 0.0:
            raise ConfigError("params.Q: required when delta is 0")
    if cfg.scheme == "recursive-vertex":
        _girth_param(cfg.params)
    if cfg.scheme == "recursive-edge":
        kind = cfg.params.get("selection")
        if kind not in EDGE_KINDS:
            raise ConfigError(f"params.selection: must be one of {EDGE_KINDS}")
    if cfg.scheme == "two-phase":
        _t_param(cfg.params)
    if cfg.kind == "gap":
        for fld in ("u", "v"):
            if fld not in cfg.params:
                raise ConfigError(f"params.{fld}: required for kind=gap")
            _as_int(cfg.params[fld], f"params.{fld}", lo=0)
        _as_float(cfg.params.get("t_k", -1.0), "params.t_k", 0.0, 1.0)
        if cfg.params.get("t_k", 0.0) <= 0.0:
            raise ConfigError("params.t_k: must lie in (0, 1]")
    if cfg.kind == "hardness":
        if cfg.instance.get("family") != "complete_bipartite" or "n" not in cfg.instance:
            raise ConfigError("instance: kind=hardness requires {family: complete_bipartite, n: ...}")
        _as_int(cfg.instance["n"], "instance.n", lo=1)
        if "t_max" in cfg.params:
            _as_int(cfg.params["t_max"], "params.t_max", lo=0)
    elif not isinstance(cfg.instance, dict) or not ("path" in cfg.instance or "family" in cfg.instance):
        raise ConfigError("instance: object with 'family' (plus parameters) or 'path' required")
    if not isinstance(cfg.checks, list):
        raise ConfigError("checks: must be a list")
    for i, chk in enumerate(cfg.checks):
        if not isinstance(chk, dict) or set(chk) != {"metric", "op", "value"}:
            raise ConfigError(f"checks[{i}]: object with metric/op/value required")
        if not isinstance(chk["metric"], str) or not chk["metric"]:
            raise ConfigError(f"checks[{i}].metric: non-empty string required")
        if chk["op"] not in CHECK_OPS:
            raise ConfigError(f"checks[{i}].op: must be one of {CHECK_OPS}")
        if isinstance(chk["value"], (str, list, dict)) or chk["value"] is None:
            raise ConfigError(f"checks[{i}].value: number or boolean required")


def resolve_instance(spec: dict) -> Graph:
    if "path" in spec:
        return Graph.load(spec["path"])
    params = {k: v for k, v in spec.items() if k != "family"}
    family = spec.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"instance.family: must be one of {sorted(FAMILIES)}")
    try:
        return generate(family, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"instance: {exc}") from exc


# -- runners ---------------------------------------------------------------------


@dataclass
class ExperimentReport:
    kind: str
    summary: dict
    columns: list[str]
    rows: list[list]


def _py(value):
    """Coerce numpy scalars so json/repr formatting stays deterministic."""
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _run_scheme(cfg: ExperimentConfig, g: Graph):
    """Dispatch a selectability/profile simulation; returns (sim, meta)."""
    p = cfg.params
    if cfg.scheme == "recursive-vertex":
        sel = vertex_selection(_girth_param(p))
        sim = simulate_vertex(g, sel, p["T"], float(p["delta"]), cfg.trials, cfg.seed, Q=p.get("Q"), bins=cfg.bins)
        return sim, {"sel": sel, "T": p["T"], "delta": float(p["delta"])}
    if cfg.scheme == "recursive-edge":
        sel = edge_selection(p["selection"])
        sim = simulate_edge(g, sel, p["T"], float(p["delta"]), cfg.trials, cfg.seed, Q=p.get("Q"), bins=cfg.bins)
        return sim, {"sel": sel, "T": p["T"], "delta": float(p["delta"])}
    if cfg.scheme == "rank1-closed":
        return simulate_rank1(g, cfg.trials, cfg.seed, bins=cfg.bins), {}
    if cfg.scheme == "two-phase":
        return simulate_two_phase(g, _t_param(p), cfg.trials, cfg.seed, bins=cfg.bins), {}
    raise ConfigError(f"scheme: {cfg.scheme} has no simulation runner")


def estimate_selectability(cfg: ExperimentConfig) -> ExperimentReport:
    """Per-edge acceptance frequencies with Wilson intervals."""
    validate_config(cfg)
    g = resolve_instance(cfg.instance)
    sim, _ = _run_scheme(cfg, g)
    columns = [
        "eid", "u", "v", "x", "active", "accepted",
        "ratio_active", "ra_lo", "ra_hi", "ratio_x", "rx_lo", "rx_hi", "insufficient",
    ]
    rows = []
    min_ra = min_rx = math.inf
    max_ra = max_rx = -math.inf
    argmin_ra = argmin_rx = -1
    insufficient = 0
    for eid in range(g.edge_count):
        act = int(sim.active[eid])
        acc = int(sim.accepted[eid])
        x = float(g.x[eid])
        thin = act == 0 or x == 0.0
        if thin:
            insufficient += 1
            rows.append([eid, int(g.eu[eid]), int(g.ev[eid]), x, act, acc,
                         "", "", "", "", "", "", True])
            continue
        ra = acc / act
        ra_lo, ra_hi = wilson_interval(acc, act)
        px_lo, px_hi = wilson_interval(acc, cfg.trials)
        rx = acc / (cfg.trials * x)
        rx_lo, rx_hi = px_lo / x, px_hi / x
        rows.append([eid, int(g.eu[eid]), int(g.ev[eid]), x, act, acc,
                     ra, ra_lo, ra_hi, rx, rx_lo, rx_hi, False])
        if ra < min_ra:
            min_ra, argmin_ra = ra, eid
        if rx < min_rx:
            min_rx, argmin_rx = rx, eid
        max_ra = max(max_ra, ra)
        max_rx = max(max_rx, rx)
    summary = {
        "edges": g.edge_count,
        "trials": cfg.trials,
        "insufficient_count": insufficient,
        "min_ratio_active": min_ra if insufficient < g.edge_count else math.nan,
        "max_ratio_active": max_ra if insufficient < g.edge_count else math.nan,
        "min_ratio_x": min_rx if insufficient < g.edge_count else math.nan,
        "max_ratio_x": max_rx if insufficient < g.edge_count else math.nan,
        "argmin_edge_active": argmin_ra,
        "argmin_edge_x": argmin_rx,
    }
    return ExperimentReport("selectability", summary, columns, rows)


def _profile_band(cfg: ExperimentConfig, meta: dict, mid: float, target: float) -> tuple[float, float, bool]:
    """(band_lo, band_hi, plain) for one bin; plain adds the undiscounted check."""
    if cfg.scheme == "rank1-closed":
        return target, target, True
    sel = meta["sel"]
    T, delta = meta["T"], meta["delta"]
    discount = (1.0 - delta) / (1.0 + delta) * (1.0 - 4.0 / (sel.floor * T * mid))
    # the engine's own 1/(1 + 1/(CTy)) thinning dominates small-y bins; the
    # plain +/- 3 sigma match is only meaningful where it is negligible
    plain = cfg.scheme == "recursive-edge" and mid >= 0.5
    return discount * target, target, plain


def exact_selection_profile(cfg: ExperimentConfig) -> ExperimentReport:
    """Binned conditional acceptance versus the scheme's target curve."""
    validate_config(cfg)
    if cfg.kind != "profile":
        raise ConfigError("kind: exact_selection_profile requires kind=profile")
    g = resolve_instance(cfg.instance)
    sim, meta = _run_scheme(cfg, g)
    bins = cfg.bins
    act_b = sim.act_bin.sum(axis=0)
    acc_b = sim.acc_bin.sum(axis=0)
    if cfg.scheme == "rank1-closed":
        target_fn = lambda y: math.exp(-y)  # noqa: E731
    else:
        target_fn = meta["sel"]
    columns = ["bin", "lo", "hi", "mid", "active", "accepted", "rate", "sigma",
               "target", "band_lo", "band_hi", "status"]
    rows = []
    passed = failed = underpowered = 0
    worst_gap = 0.0
    for b in range(bins):
        lo, hi = b / bins, (b + 1) / bins
        mid = (lo + hi) / 2.0
        act, acc = int(act_b[b]), int(acc_b[b])
        target = float(target_fn(mid))
        band_lo, band_hi, plain = _profile_band(cfg, meta, mid, target)
        if act < UNDERPOWERED_COUNT:
            underpowered += 1
            rate = acc / act if act else ""
            rows.append([b, lo, hi, mid, act, acc, rate, "", target, band_lo, band_hi, "underpowered"])
            continue
        rate = acc / act
        sigma = math.sqrt(max(rate * (1.0 - rate), 1e-12) / act)
        w_lo, w_hi = wilson_interval(acc, act, z=3.0)
        ok = w_hi >= band_lo and w_lo <= band_hi
        if plain:
            ok = ok and w_lo <= target <= w_hi
        passed += ok
        failed += not ok
        worst_gap = max(worst_gap, max(band_lo - rate, rate - band_hi) / sigma)
        rows.append([b, lo, hi, mid, act, acc, rate, sigma, target, band_lo, band_hi,
                     "pass" if ok else "fail"])
    summary = {
        "bins": bins,
        "powered": passed + failed,
        "underpowered": underpowered,
        "bins_pass": passed,
        "bins_fail": failed,
        "all_pass": failed == 0,
        "worst_gap_sigma": worst_gap,
    }
    return ExperimentReport("profile", summary, columns, rows)


def _run_gap(cfg: ExperimentConfig) -> ExperimentReport:
    g = resolve_instance(cfg.instance)
    p = cfg.params
    sel = vertex_selection(_girth_param(p))
    Q = p.get("Q") or required_samples(sel.floor, float(p["delta"]), p["T"], g.vertex_count)
    table = fill_tables(g, sel, p["T"], float(p["delta"]), Q, cfg.seed)
    rep = correlation_gap(g, sel, table, p["u"], p["v"], float(p["t_k"]), cfg.trials, cfg.seed)
    summary = {
        "u": rep.u,
        "v": rep.v,
        "t_k": rep.t_k,
        "trials": rep.trials,
        "gap": rep.gap,
        "sigma": rep.sigma,
        "bound": rep.bound,
        "within_bound": rep.within_bound,
        "mean_inner": rep.mean_inner,
        "mean_outer": rep.mean_outer,
        "count_inner": rep.count_inner,
        "count_outer": rep.count_outer,
        "flip_count": rep.flip_count,
        "violation_count": rep.violation_count,
        "max_paths": rep.max_paths,
    }
    columns = list(summary)
    return ExperimentReport("gap", summary, columns, [[summary[c] for c in columns]])


def _run_hardness(cfg: ExperimentConfig) -> ExperimentReport:
    n = int(cfg.instance["n"])
    rep = hardness_trajectory(n, cfg.trials, cfg.seed, algorithm="greedy")
    t_max = int(cfg.params.get("t_max", math.floor(1.9 * n)))
    mean = rep.mean_trajectory
    ref = rep.reference
    q_freq = rep.q_frequency
    columns = ["t", "mean_matched_frac", "reference", "q_frequency"]
    rows = [[int(t), float(mean[t]), float(ref[t]), float(q_freq[t])] for t in range(2 * n + 1)]
    summary = {
        "n": n,
        "trials": cfg.trials,
        "t_max": t_max,
        "mean_final": rep.mean_final,
        "reference_final": m_de(2.0),
        "final_error": abs(rep.mean_final - m_de(2.0)),
        "sup_distance": rep.sup_distance,
        "q_min_frequency": rep.q_min_frequency(t_max),
        "q_all_frequency": rep.q_all_frequency(t_max),
    }
    return ExperimentReport("hardness", summary, columns, rows)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    validate_config(cfg)
    if cfg.kind == "selectability":
        return estimate_selectability(cfg)
    if cfg.kind == "profile":
        return exact_selection_profile(cfg)
    if cfg.kind == "gap":
        return _run_gap(cfg)
    return _run_hardness(cfg)


# -- report files ----------------------------------------------------------------


def _cell(value) -> str:
    value = _py(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(out_dir: str | Path, name: str, cfg: ExperimentConfig, report: ExperimentReport, seconds: float) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"# {CSV_VERSION} {report.kind}", ",".join(report.columns)]
    lines.extend(",".join(_cell(v) for v in row) for row in report.rows)
    (out / f"{name}.csv").write_text("\n".join(lines) + "\n")
    payload = {
        "kind": report.kind,
        "config": cfg.echo(),
        "summary": {k: _py(v) for k, v in report.summary.items()},
    }
    (out / f"{name}.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    (out / f"{name}.timing.json").write_text(json.dumps({"seconds": seconds}) + "\n")


# -- suite -----------------------------------------------------------------------


def get_metric(summary: dict, path: str):
    node = summary
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"checks.metric: unknown metric {path!r}")
        node = node[part]
    return node


def apply_check(op: str, actual, value) -> bool:
    if op == ">=":
        return actual >= value
    if op == "<=":
        return actual <= value
    if op == ">":
        return actual > value
    if op == "<":
        return actual < value
    if op == "==":
        return actual == value
    return actual != value


@dataclass
class SuiteResult:
    out_dir: Path
    entries: list[dict]

    @property
    def passed(self) -> bool:
        return all(e["passed"] for e in self.entries)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


def load_suite_config(path: str | Path) -> tuple[list[ExperimentConfig], str]:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"suite: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("suite: top-level object required")
    for key in raw:
        if key not in ("out_dir", "experiments"):
            raise ConfigError(f"{key}: unknown field")
    experiments = raw.get("experiments", [])
    if not isinstance(experiments, list):
        raise ConfigError("experiments: must be a list")
    configs = []
    seen = set()
    for i, entry in enumerate(experiments):
        try:
            cfg = ExperimentConfig.from_dict(entry)
        except ConfigError as exc:
            raise ConfigError(f"experiments[{i}].{exc}") from exc
        if cfg.name in seen:
            raise ConfigError(f"experiments[{i}].name: duplicate {cfg.name!r}")
        seen.add(cfg.name)
        configs.append(cfg)
    return configs, raw.get("out_dir", ".")


def run_suite(path: str | Path, out_dir: str | Path | None = None) -> SuiteResult:
    """Execute every configured experiment; exit code 1 iff a check failed."""
    configs, cfg_out = load_suite_config(path)
    out = Path(out_dir) if out_dir is not None else Path(path).parent / cfg_out
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    total_start = time.perf_counter()
    for cfg in configs:
        start = time.perf_counter()
        report = run_experiment(cfg)
        seconds = time.perf_counter() - start
        write_report(out, cfg.name, cfg, report, seconds)
        checks = []
        for chk in cfg.checks:
            actual = _py(get_metric(report.summary, chk["metric"]))
            ok = apply_check(chk["op"], actual, chk["value"])
            checks.append({
                "metric": chk["metric"],
                "op": chk["op"],
                "value": chk["value"],
                "actual": actual,
                "passed": bool(ok),
            })
        entries.append({"name": cfg.name, "kind": cfg.kind, "checks": checks,
                        "passed": all(c["passed"] for c in checks)})
    result = SuiteResult(out, entries)
    (out / "suite.json").write_text(
        json.dumps({"experiments": entries, "passed": result.passed}, sort_keys=True, indent=2) + "\n"
    )
    (out / "suite.timing.json").write_text(
        json.dumps({"seconds": time.perf_counter() - total_start}) + "\n"
    )
    return result
