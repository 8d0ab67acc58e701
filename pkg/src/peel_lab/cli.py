"""Command-line interface: ``peel-lab <command> [options]``.

Every command resolves a :class:`RunConfig` from built-in defaults, an
optional ``key = value`` file (``--config``) and the command-line flags, in
that order of precedence.  The resolved configuration and the library
version are embedded in every output.

Exit codes: 0 success, 1 failed check or runtime error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .weights import InvalidWeights, WeightSequence, parse_model, to_float

log = logging.getLogger("peel_lab")


class ConfigError(ValueError):
    """Invalid configuration; the CLI exits with code 2."""


# ---------------------------------------------------------------------------
# configuration

def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "default"):
        return None
    return float(text)


@dataclass
class RunConfig:
    """Resolved settings of one run.

    ``model`` is ``2p:<p>``; ``weights_file`` (lines ``k q_k``) takes
    precedence when set.  ``tol`` overrides every deterministic residual
    tolerance of ``verify`` when given.  ``radius`` is a comma separated list;
    commands that need one radius use the largest.
    """

    model: str = "2p:2"
    weights_file: Optional[str] = None
    L: int = 400
    K: Optional[int] = None
    M: Optional[int] = None
    simple_L: int = 500
    tol: Optional[float] = None
    radius: str = "4"
    replicas: int = 100
    budget: int = 10**7
    seed: int = 0
    out: str = "text"
    output: Optional[str] = None
    threads: Optional[int] = None
    mode: str = "halfplane-general"
    law: str = "tilde"
    stats: str = "gulp"
    kind: str = "site,bond,face"
    p: Optional[float] = None
    grid: str = "0.2:0.95:76"
    bootstrap: int = 200
    simple: bool = False
    check: bool = False
    p_max: int = 40
    exact: bool = False
    export: bool = False
    mc: bool = True
    core_runs: int = 10**6
    peel_samples: int = 10**5
    dangling_samples: int = 10**5
    figures: bool = True

    _casts = {"L": int, "K": lambda x: None if str(x).lower() == "none" else int(x),
              "M": lambda x: None if str(x).lower() == "none" else int(x),
              "simple_L": int, "tol": _opt_float, "replicas": int, "budget": int, "seed": int,
              "threads": lambda x: None if str(x).lower() == "none" else int(x),
              "p": _opt_float, "bootstrap": int, "simple": _bool, "check": _bool,
              "p_max": int, "exact": _bool, "export": _bool, "mc": _bool, "core_runs": int,
              "peel_samples": int, "dangling_samples": int, "figures": _bool}

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def update(self, values: Dict[str, object]) -> "RunConfig":
        known = set(self.keys())
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            cast = self._casts.get(key, lambda x: None if x is None else str(x))
            try:
                setattr(self, key, cast(raw) if raw is not None else None)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        return self

    def validate(self) -> "RunConfig":
        if self.out not in ("text", "json", "csv"):
            raise ConfigError(f"unknown output format {self.out!r}")
        if self.L < 2 or self.simple_L < 10:
            raise ConfigError("L must be >= 2 and simple_L >= 10")
        if self.replicas < 0 or self.budget < 1:
            raise ConfigError("replicas must be >= 0 and budget >= 1")
        if self.tol is not None and self.tol < 0:
            raise ConfigError("tol must be >= 0")
        if self.mode not in ("finite", "halfplane-general", "halfplane-tilde"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.law not in ("tilde", "hat"):
            raise ConfigError(f"unknown law {self.law!r}")
        for k in self.kinds():
            if k not in ("site", "bond", "face"):
                raise ConfigError(f"unknown percolation kind {k!r}")
        self.radii()
        self.p_grid()
        return self

    def radii(self) -> List[int]:
        try:
            r = sorted({int(x) for x in str(self.radius).split(",") if x.strip()})
        except ValueError as exc:
            raise ConfigError(f"bad radius list {self.radius!r}") from exc
        if not r or r[0] < 0:
            raise ConfigError("radius must be a list of nonnegative integers")
        return r

    def kinds(self) -> List[str]:
        return [k.strip() for k in str(self.kind).split(",") if k.strip()]

    def p_grid(self) -> np.ndarray:
        if self.p is not None:
            if not 0 <= self.p <= 1:
                raise ConfigError("p must lie in [0, 1]")
            return np.array([self.p])
        try:
            a, b, n = str(self.grid).split(":")
            a, b, n = float(a), float(b), int(n)
        except ValueError as exc:
            raise ConfigError(f"grid must be a:b:n, got {self.grid!r}") from exc
        if not (0 <= a <= b <= 1) or n < 1:
            raise ConfigError("grid must satisfy 0 <= a <= b <= 1 and n >= 1")
        return np.linspace(a, b, n)

    def as_dict(self) -> Dict[str, object]:
        return {k: getattr(self, k) for k in self.keys()}

    def weights(self) -> WeightSequence:
        if self.weights_file:
            return WeightSequence.from_file(self.weights_file)
        return parse_model(self.model)


def read_config_file(path: str) -> Dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: Dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def thread_cap(config: RunConfig) -> int:
    """Worker count: the config value capped by ``PEEL_LAB_THREADS``."""
    env = os.environ.get("PEEL_LAB_THREADS")
    cap = None
    if env:
        try:
            cap = max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"PEEL_LAB_THREADS must be an integer, got {env!r}") from exc
    n = config.threads or cap or 1
    return min(n, cap) if cap else n


# ---------------------------------------------------------------------------
# model cache and replica pools

_MODELS: Dict[tuple, object] = {}


def model_for(config: RunConfig):
    from .checks import Model

    key = (config.model, config.weights_file, config.L, config.simple_L, config.K, config.M)
    if key not in _MODELS:
        _MODELS[key] = Model(config.weights(), L=config.L, simple_L=config.simple_L,
                             K=config.K, M=config.M)
    return _MODELS[key]


def _call(args):
    fn, cfg, seq = args
    return fn(RunConfig().update(cfg), np.random.default_rng(seq))


def run_replicas(fn: Callable[[RunConfig, np.random.Generator], object], config: RunConfig,
                 n: int, stream: int = 0) -> List[object]:
    """``fn`` on ``n`` independent streams spawned from the seed.

    Replica ``i`` always receives the ``i``-th child stream, so results do
    not depend on the number of workers.
    """
    seqs = np.random.SeedSequence([config.seed, stream]).spawn(n)
    workers = thread_cap(config)
    if workers <= 1 or n < 2:
        return [fn(config, np.random.default_rng(s)) for s in seqs]
    cfg = config.as_dict()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, [(fn, cfg, s) for s in seqs],
                             chunksize=max(1, n // (4 * workers))))


# ---------------------------------------------------------------------------
# output

def provenance(config: RunConfig) -> Dict[str, object]:
    return {"tool": "peel-lab", "version": __version__, "config": config.as_dict()}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if x is None or isinstance(x, str):
        return x
    if isinstance(x, Fraction):
        return str(x)
    return float(x) if hasattr(x, "__float__") else repr(x)


def render_json(config: RunConfig, result) -> str:
    doc = {"provenance": provenance(config), "result": _jsonable(result)}
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def render_csv(config: RunConfig, rows: Sequence[Dict[str, object]]) -> str:
    buf = io.StringIO()
    buf.write(f"# peel-lab {__version__}\n")
    cfg = provenance(config)["config"]
    buf.write("# config " + " ".join(f"{k}={json.dumps(_jsonable(v))}" for k, v in cfg.items()) + "\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v) if v is not None else ""


def emit(config: RunConfig, text: str, stream=None):
    """Write to ``config.output`` or stdout."""
    if config.output:
        Path(config.output).write_text(text, encoding="utf-8")
    else:
        (stream or sys.stdout).write(text)


def emit_result(config: RunConfig, result: Dict[str, object], rows: Sequence[Dict[str, object]],
                text: Optional[str] = None):
    if config.out == "json":
        emit(config, render_json(config, result))
    elif config.out == "csv":
        emit(config, render_csv(config, rows))
    else:
        emit(config, text if text is not None else render_json(config, result))


# ---------------------------------------------------------------------------
# commands

def cmd_weights(config: RunConfig) -> int:
    from .weights import criticality_report

    m = model_for(config)
    nu = m.nu
    d = m.disk
    head = min(10, d.L)
    result = {
        "weights": {str(k): str(v) for k, v in m.q.items()},
        "c": str(d.c), "W_c": str(d.W_c), "exact": d.exact,
        "W": [str(w) for w in d.W[:head + 1]],
        "nu_pos": [str(v) for v in nu.pos],
        "nu_neg": [str(v) for v in nu.neg[:head]],
        "S": str(nu.S_closed), "gulp": str(nu.gulp_closed), "exposure": str(nu.exposure),
        "diagnostics": criticality_report(nu).as_dict(),
    }
    rows = [{"l": l, "W": to_float(d.W[l]), "nu_neg": to_float(nu.neg[l - 1]) if l else ""}
            for l in range(head + 1)]
    text = "".join(f"{k} = {v}\n" for k, v in result.items() if k != "diagnostics")
    text += "".join(f"{k} = {v}\n" for k, v in result["diagnostics"].items())
    emit_result(config, result, rows, text)
    return 0


def cmd_series(config: RunConfig) -> int:
    m = model_for(config)
    d = m.disk
    L = min(config.L, d.L)
    W = [to_float(w) for w in d.W[:L + 1]]
    hat = [to_float(w) for w in m.sdisk.hatW[:L + 1]] if config.simple else None
    rows = []
    for l in range(L + 1):
        row = {"l": l, "W": W[l], "W_ratio": W[l] / W[l - 1] if l else ""}
        if hat is not None and l < len(hat):
            row["W_simple"] = hat[l]
            row["W_simple_ratio"] = hat[l] / hat[l - 1] if l else ""
        rows.append(row)
    result = {"c": str(d.c), "rows": rows}
    if hat is not None:
        result["hat_c"] = str(m.sdisk.hat_c)
    text = render_csv(config, rows)
    emit_result(config, result, rows, text)
    return 0


def cmd_walks(config: RunConfig) -> int:
    from .checks import renewal_checks

    m = model_for(config)
    H = m.H
    head = 10
    result = {"H_down": [str(H.down(l)) for l in range(head)],
              "H_up": [str(H.up(l)) for l in range(head + 1)]}
    code = 0
    rows = [{"l": l, "H_down": to_float(H.down(l)), "H_up": to_float(H.up(l))} for l in range(head)]
    text = f"H_down = {' '.join(result['H_down'])}\nH_up = {' '.join(result['H_up'])}\n"
    if config.check:
        from .walks import check_H_identities

        rep = check_H_identities(m.nu, H, p_max=config.p_max,
                                 tol=1e-10 if config.tol is None else config.tol,
                                 q=m.q, c=m.disk.c)
        result["identities"] = rep.as_dict()
        checks = renewal_checks(m, config.tol)
        result["checks"] = [c.row() for c in checks]
        text += "".join(f"{'PASS' if c.passed else 'FAIL'}  {c.check}: {c.value} "
                        f"(tolerance {c.tolerance})\n" for c in checks)
        if not rep.passed or not all(c.passed for c in checks):
            code = 1
    emit_result(config, result, rows, text)
    return code


def _core_replica(config: RunConfig, rng: np.random.Generator):
    from .peel_engine import EChain, run_A_core

    m = model_for(config)
    chain = getattr(m, "_echain", None)
    if chain is None:
        chain = m._echain = EChain(m.nu, m.H)
    r = run_A_core(chain, rng, budget=config.budget)
    return {"D": r.D, "tau": r.tau, "core_half_perimeter": r.core_half_perimeter}


def _ball_replica(config: RunConfig, rng: np.random.Generator):
    from .peel_engine import Explorer, check_structure, export_map

    m = model_for(config)
    law = {"finite": None, "halfplane-general": m.nu_law, "halfplane-tilde": m.tilde}[config.mode]
    r = max(config.radii())
    ex = Explorer(config.mode, m.disk, rng, law=law, finite_law=m.finite_law,
                  budget=config.budget)
    ball = ex.grow(r)
    info = check_structure(ball)
    out = {"steps": ball.steps, "V": info["V"], "E": info["E"], "F": info["F"],
           "holes": info["holes"], "exposed": len(ball.exposed)}
    if config.export:
        out["map"] = export_map(ball)
    return out


def _halfplane_replica(config: RunConfig, rng: np.random.Generator):
    from .halfplane import SimpleStepSampler, run_A_metric

    m = model_for(config)
    if config.law == "hat":
        sampler = getattr(m, "_step_sampler", None)
        if sampler is None:
            sampler = m._step_sampler = SimpleStepSampler(m.disk, m.nu, m.H, law=m.tilde,
                                                          budget=config.budget)
        s = sampler.sample(rng)
        return {"k": s.k, "exposure": s.exposure, "gulp_left": s.gulp_left,
                "gulp_right": s.gulp_right}
    ex = run_A_metric(max(config.radii()), rng, m.disk, m.tilde, budget=config.budget,
                      finite_law=m.finite_law)
    ball = ex._ball(max(config.radii()))
    return {"steps": ex.steps, "first_face_half_degree": len(ex.m.faces[0]) // 2,
            "exposed": len(ball.exposed), "vertices": len(ball.pmap.vertex_ids())}


def _summaries(rows: List[Dict[str, object]]) -> Dict[str, Dict[str, float]]:
    out = {}
    if not rows:
        return out
    for key, v in rows[0].items():
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            a = np.array([r[key] for r in rows], dtype=float)
            se = float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else float("nan")
            out[key] = {"mean": float(a.mean()), "se": se}
    return out


def cmd_simulate(config: RunConfig, what: str) -> int:
    fn = {"core": _core_replica, "ball": _ball_replica, "halfplane": _halfplane_replica}[what]
    rows = run_replicas(fn, config, config.replicas)
    flat = [{"replica": i, **{k: v for k, v in r.items() if k != "map"}} for i, r in enumerate(rows)]
    result = {"what": what, "summary": _summaries(flat), "replicas": rows}
    if what == "core":
        counts: Dict[int, int] = {}
        for r in rows:
            counts[r["core_half_perimeter"]] = counts.get(r["core_half_perimeter"], 0) + 1
        result["core_half_perimeter_counts"] = dict(sorted(counts.items()))
    text = "".join(f"{k}: mean {v['mean']!r} se {v['se']!r}\n" for k, v in result["summary"].items())
    emit_result(config, result, flat, text)
    return 0


def _levels_replica(config: RunConfig, rng: np.random.Generator):
    from .peel_engine import Explorer
    from .percolation import replica_levels

    m = model_for(config)
    law = m.tilde if config.mode == "halfplane-tilde" else m.nu_law
    mode = "halfplane-tilde" if config.mode == "halfplane-tilde" else "halfplane-general"
    ex = Explorer(mode, m.disk, rng, law=law, finite_law=m.finite_law, budget=config.budget)
    ball = ex.grow(max(config.radii()))
    return replica_levels(ball, rng, config.kinds())


def wilson(k: int, n: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return float("nan"), float("nan")
    ph = k / n
    den = 1 + z * z / n
    mid = (ph + z * z / (2 * n)) / den
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def percolation_grid(config: RunConfig):
    """One-arm rows ``{kind, p, r, one_arm, ci_lo, ci_hi}`` and threshold estimates."""
    from .percolation import estimate_threshold, thresholds

    reps = run_replicas(_levels_replica, config, config.replicas, stream=1)
    grid = config.p_grid()
    radii = config.radii()
    n = len(reps)
    exact = thresholds(model_for(config).nu).as_floats()
    rows, estimates = [], {}
    for kind in config.kinds():
        levels = np.array([r[kind] for r in reps])
        for p in grid:
            for r in radii:
                k = int((levels[:, r] <= p).sum()) if n else 0
                lo, hi = wilson(k, n)
                rows.append({"kind": kind, "p": float(p), "r": r, "one_arm": k / n if n else float("nan"),
                             "ci_lo": lo, "ci_hi": hi})
        if len(radii) >= 3 and len(grid) >= 2 and n:
            est = estimate_threshold(kind, levels, radii, grid,
                                     np.random.default_rng([config.seed, 2]),
                                     bootstrap=config.bootstrap)
            estimates[kind] = {"estimate": est.estimate, "ci": list(est.ci), "exact": exact[kind],
                               "warnings": est.warnings}
    return rows, estimates


def cmd_percolate(config: RunConfig) -> int:
    if config.replicas < 1:
        raise ConfigError("percolate needs replicas >= 1")
    rows, estimates = percolation_grid(config)
    result = {"rows": rows, "estimates": estimates}
    text = render_csv(config, rows) + "".join(
        f"# {k}: estimate {v['estimate']!r} ci {v['ci']} exact {v['exact']!r}\n"
        for k, v in estimates.items())
    emit_result(config, result, rows, text)
    return 0


def cmd_thresholds(config: RunConfig) -> int:
    from .percolation import thresholds

    rep = thresholds(model_for(config).nu)
    vals = rep.as_strings() if config.exact else {k: repr(v) for k, v in rep.as_floats().items()}
    result = {"site": vals["site"], "bond": vals["bond"], "face": vals["face"],
              "S": str(rep.S), "nu_minus_one": str(rep.nu_minus_one), "gulp": str(rep.gulp)}
    rows = [{"kind": k, "threshold": vals[k]} for k in ("site", "bond", "face")]
    text = "".join(f"{k} = {vals[k]}\n" for k in ("site", "bond", "face"))
    text += f"thresholds = {vals['site']} {vals['bond']} {vals['face']}\n"
    emit_result(config, result, rows, text)
    return 0


def _suite(config: RunConfig):
    from .checks import run_suite

    return run_suite(model_for(config), np.random.SeedSequence([config.seed, 3]), tol=config.tol,
                     core_runs=config.core_runs, peel_samples=config.peel_samples,
                     dangling_samples=config.dangling_samples, mc=config.mc,
                     log=lambda s: log.info(s))


def _table(checks) -> str:
    w = max(len(c.check) for c in checks)
    lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.check:<{w}}  value={c.value}  "
             f"target={c.target}  tol={c.tolerance}" + (f"  [{c.detail}]" if c.detail else "")
             for c in checks]
    return "\n".join(lines) + "\n"


def cmd_verify(config: RunConfig) -> int:
    from .percolation import thresholds

    res = _suite(config)
    rows = [c.row() for c in res.checks]
    s = thresholds(model_for(config).nu).as_strings()
    line = f"thresholds = {s['site']} {s['bond']} {s['face']}"
    fail = res.first_failure()
    result = {"checks": rows, "passed": res.passed, "timings": res.timings, "thresholds": s,
              "first_failure": fail.check if fail else None}
    text = _table(res.checks) + line + "\n"
    text += "verify: all checks passed\n" if res.passed else f"verify: FAILED ({fail.check})\n"
    emit_result(config, result, rows, text)
    if fail is not None:
        print(f"first failing check: {fail.check}", file=sys.stderr)
    return 0 if res.passed else 1


def _figure(path: Path, rows, estimates, exact):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    kinds = sorted({r["kind"] for r in rows})
    fig, axes = plt.subplots(1, len(kinds), figsize=(4.5 * len(kinds), 3.6), squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        sub = [r for r in rows if r["kind"] == kind]
        for r in sorted({x["r"] for x in sub}):
            pts = [x for x in sub if x["r"] == r]
            ax.plot([x["p"] for x in pts], [x["one_arm"] for x in pts], label=f"r={r}")
            ax.fill_between([x["p"] for x in pts], [x["ci_lo"] for x in pts],
                            [x["ci_hi"] for x in pts], alpha=0.2)
        ax.axvline(exact[kind], color="k", ls="--", lw=0.8, label="exact")
        if kind in estimates and math.isfinite(estimates[kind]["estimate"]):
            ax.axvline(estimates[kind]["estimate"], color="r", ls=":", lw=0.8, label="estimate")
        ax.set_title(f"{kind} percolation")
        ax.set_xlabel("p")
        ax.set_ylabel("one-arm probability")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None, "Creation Time": None}
                if path.suffix == ".png" else None)
    plt.close(fig)


def cmd_report(config: RunConfig) -> int:
    """Write ``checks.csv``, ``checks.json``, ``thresholds.json`` and, with
    ``replicas > 0``, ``percolation.csv`` (plus a figure) into ``output``."""
    from .percolation import thresholds

    outdir = Path(config.output or "peel-lab-report")
    outdir.mkdir(parents=True, exist_ok=True)
    res = _suite(config)
    rows = [c.row() for c in res.checks]
    (outdir / "checks.csv").write_text(render_csv(config, rows), encoding="utf-8")
    (outdir / "checks.json").write_text(render_json(config, {"checks": rows, "passed": res.passed}),
                                        encoding="utf-8")
    rep = thresholds(model_for(config).nu)
    (outdir / "thresholds.json").write_text(
        render_json(config, {**rep.as_strings(), "exact": True}), encoding="utf-8")
    written = ["checks.csv", "checks.json", "thresholds.json"]
    if config.replicas > 0:
        prow, est = percolation_grid(config)
        (outdir / "percolation.csv").write_text(render_csv(config, prow), encoding="utf-8")
        (outdir / "percolation.json").write_text(render_json(config, {"estimates": est}),
                                                 encoding="utf-8")
        written += ["percolation.csv", "percolation.json"]
        if config.figures and prow:
            _figure(outdir / "one_arm.png", prow, est, rep.as_floats())
            written.append("one_arm.png")
    print("\n".join(str(outdir / w) for w in written))
    return 0 if res.passed else 1


# ---------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser, *extra: str):
    g = p.add_argument_group("common")
    g.add_argument("--config", help="key = value configuration file")
    g.add_argument("--model", help="weight sequence, 2p:<p>")
    g.add_argument("--file", dest="weights_file", help="weight file with lines 'k q_k'")
    g.add_argument("--L", type=int, help="disk series truncation")
    g.add_argument("--K", type=int, help="negative step truncation")
    g.add_argument("--M", type=int, help="renewal table length")
    g.add_argument("--tol", type=float, help="override residual tolerances")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", choices=["text", "json", "csv"], help="output format")
    g.add_argument("--output", "-o", help="output file (directory for report)")
    g.add_argument("--threads", type=int, help="worker processes (capped by PEEL_LAB_THREADS)")
    g.add_argument("--budget", type=int, help="step budget per exploration")
    g.add_argument("-v", "--verbose", action="store_true")
    for name in extra:
        _EXTRA[name](p)


_EXTRA = {
    "radius": lambda p: p.add_argument("--radius", help="radius or comma separated radii"),
    "replicas": lambda p: p.add_argument("--replicas", type=int),
    "mc": lambda p: (p.add_argument("--no-mc", dest="mc", action="store_const", const=False,
                                    help="skip Monte Carlo checks"),
                     p.add_argument("--core-runs", type=int),
                     p.add_argument("--peel-samples", type=int),
                     p.add_argument("--dangling-samples", type=int)),
    "perc": lambda p: (p.add_argument("--kind", help="site, bond, face or a comma list"),
                       p.add_argument("--p", type=float, help="single percolation parameter"),
                       p.add_argument("--grid", help="parameter grid a:b:n"),
                       p.add_argument("--bootstrap", type=int),
                       p.add_argument("--mode", choices=["halfplane-general", "halfplane-tilde"])),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peel-lab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"peel-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", help="growth constant, disk function and step measure")
    _common(p)

    p = sub.add_parser("series", help="disk series W and simple-boundary series")
    _common(p)
    p.add_argument("--simple", action="store_const", const=True)
    p.add_argument("--simple-L", type=int)

    p = sub.add_parser("walks", help="renewal functions and their identities")
    _common(p)
    p.add_argument("--check", action="store_const", const=True)
    p.add_argument("--p-max", type=int)

    p = sub.add_parser("simulate", help="core explorations, balls or half-plane steps")
    p.add_argument("what", choices=["core", "ball", "halfplane"])
    _common(p, "radius", "replicas")
    p.add_argument("--mode", choices=["finite", "halfplane-general", "halfplane-tilde"])
    p.add_argument("--law", choices=["tilde", "hat"])
    p.add_argument("--stats", choices=["gulp"])
    p.add_argument("--export", action="store_const", const=True, help="include map exports")

    p = sub.add_parser("percolate", help="one-arm curves and threshold estimates")
    _common(p, "radius", "replicas", "perc")

    p = sub.add_parser("thresholds", help="closed-form percolation thresholds")
    _common(p)
    p.add_argument("--exact", action="store_const", const=True)

    p = sub.add_parser("verify", help="run the identity suite")
    _common(p, "mc")
    p.add_argument("--simple-L", type=int)

    p = sub.add_parser("report", help="write check and percolation tables (and a figure)")
    _common(p, "radius", "replicas", "mc", "perc")
    p.add_argument("--no-figures", dest="figures", action="store_const", const=False)
    return parser


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(ns, "config", None):
        cfg.update(read_config_file(ns.config))
    flags = {k: v for k, v in vars(ns).items()
             if v is not None and k not in ("config", "command", "what", "verbose")}
    cfg.update(flags)
    return cfg.validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = resolve_config(ns)
        if config.weights_file is None:
            parse_model(config.model)
        cmd = ns.command
        if cmd == "simulate":
            return cmd_simulate(config, ns.what)
        return {"weights": cmd_weights, "series": cmd_series, "walks": cmd_walks,
                "percolate": cmd_percolate, "thresholds": cmd_thresholds,
                "verify": cmd_verify, "report": cmd_report}[cmd](config)
    except (ConfigError, InvalidWeights) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - surface runtime failures with code 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
