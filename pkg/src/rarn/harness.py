"""Experiment harness: INI configs, single runs, epsilon sweeps and slope fits.

A config file has a ``[run]`` section (solver, seed), a problem section
(``[problem]`` or several ``[problem.NAME]``), optional ``[rar]`` / ``[rtr]``
sections holding solver parameters, and an optional ``[sweep]`` section.
See configs/reference.ini for every key and its default.
"""

import configparser
import csv
import dataclasses
import io
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from rarn.errors import ConfigError
from rarn.objective import HolderWell, Rayleigh, planted_rayleigh
from rarn.rar import RarConfig, rar_solve
from rarn.report import hard, trace_to_csv, verify_invariants
from rarn.rtr import RtrConfig, rtr_solve

SOLVERS = {"rar": (RarConfig, rar_solve), "rtr": (RtrConfig, rtr_solve)}
PROBLEMS = ("rayleigh", "holderwell")
MIN_FIT_POINTS = 4

_RUN_KEYS = {"solver", "seed"}
_PROBLEM_KEYS = {
    "rayleigh": {"type", "n", "spectrum", "rotate", "start", "seed"},
    "holderwell": {"type", "mu", "center", "b_diag", "neg_eps_scale", "start", "seed"},
}
_SWEEP_KEYS = {"eps_g", "eps_h", "alpha", "eps_h_power", "workers"}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


@dataclass
class ExperimentConfig:
    """Parsed config. ``problem`` holds the raw string values of the chosen problem section."""

    solver: str = "rtr"
    seed: int = 0
    problem_name: str = "problem"
    problem: dict = field(default_factory=dict)
    solver_params: dict = field(default_factory=dict)
    sweep: Optional[dict] = None
    source: str = "<string>"
    lines: dict = field(default_factory=dict)


@dataclass
class SweepPoint:
    eps_g: float
    eps_h: float
    outer_iters: int
    succ_iters: int
    hv_products: int
    status: str = "converged"
    max_sigma: float = math.nan
    seed: int = 0
    violations: int = 0


SWEEP_COLUMNS = [f.name for f in dataclasses.fields(SweepPoint)]


@dataclass
class SweepResult:
    solver: str
    points: List[SweepPoint] = field(default_factory=list)
    iter_slope: float = math.nan
    hv_slope: float = math.nan
    fitted_points: int = 0

    @property
    def partial(self):
        return any(p.status != "converged" for p in self.points)

    @property
    def violations(self):
        return sum(p.violations for p in self.points)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for p in self.points:
            w.writerow([repr(v) if isinstance(v, float) else v for v in dataclasses.astuple(p)])
        return buf.getvalue()

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["partial"] = self.partial
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def sweep_points_from_csv(text):
    types = {f.name: f.type for f in dataclasses.fields(SweepPoint)}
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        vals = {}
        for k, v in row.items():
            t = types[k]
            vals[k] = int(v) if t in (int, "int") else float(v) if t in (float, "float") else v
        out.append(SweepPoint(**vals))
    return out


# ---------------------------------------------------------------- parsing


def _line_index(text):
    """Map (section, key) -> 1-based line number, for diagnostics."""
    index, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = i
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line[:1].isspace():
            index.setdefault((section, m.group(1).strip().lower()), i)
    return index


def _where(cfg, section, key=None):
    line = cfg.lines.get((section, key)) or cfg.lines.get((section, None))
    return f"{cfg.source}:{line}" if line else cfg.source


def _fail(cfg, section, key, msg):
    raise ConfigError(f"{_where(cfg, section, key)}: [{section}] {key + ': ' if key else ''}{msg}")


def _float(cfg, section, key, text):
    try:
        return float(text)
    except ValueError:
        _fail(cfg, section, key, f"expected a number, got {text!r}")


def _int(cfg, section, key, text):
    try:
        return int(text)
    except ValueError:
        _fail(cfg, section, key, f"expected an integer, got {text!r}")


def _floats(cfg, section, key, text):
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not parts:
        _fail(cfg, section, key, "expected a list of numbers")
    return [_float(cfg, section, key, p) for p in parts]


def _bool(cfg, section, key, text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    _fail(cfg, section, key, f"expected a boolean, got {text!r}")


def _solver_field_value(cfg, section, key, text, fld):
    if text.strip().lower() == "none":
        return None
    if fld.name == "retraction":
        return text.strip()
    if fld.type in (int, "int"):
        return _int(cfg, section, key, text)
    return _float(cfg, section, key, text)


def _parse_solver_section(cfg, parser, name):
    if not parser.has_section(name):
        return {}
    fields_ = {f.name: f for f in dataclasses.fields(SOLVERS[name][0])}
    out = {}
    for key, text in parser.items(name):
        if key not in fields_:
            _fail(cfg, name, key, f"unknown key; allowed: {', '.join(sorted(fields_))}")
        out[key] = _solver_field_value(cfg, name, key, text, fields_[key])
    return out


def load_config(path=None, text=None, problem=None):
    """Parse an INI experiment config from ``path`` or ``text``.

    ``problem`` selects a ``[problem.NAME]`` section, or a built-in problem
    type with default parameters when no such section exists.
    """
    if text is None:
        if path is None:
            raise ConfigError("no config given")
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = ExperimentConfig(source=str(path) if path is not None else "<string>", lines=_line_index(text))
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=cfg.source)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None

    known = {"run", "rar", "rtr", "sweep", "problem"}
    for sec in parser.sections():
        if sec not in known and not sec.startswith("problem."):
            _fail(cfg, sec, None, "unknown section")

    if parser.has_section("run"):
        for key, val in parser.items("run"):
            if key not in _RUN_KEYS:
                _fail(cfg, "run", key, f"unknown key; allowed: {', '.join(sorted(_RUN_KEYS))}")
        cfg.solver = parser.get("run", "solver", fallback="rtr").strip().lower()
        if cfg.solver not in SOLVERS:
            _fail(cfg, "run", "solver", f"must be one of {sorted(SOLVERS)}, got {cfg.solver!r}")
        cfg.seed = _int(cfg, "run", "seed", parser.get("run", "seed", fallback="0"))

    section = "problem"
    if problem is not None:
        section = f"problem.{problem}"
        if not parser.has_section(section):
            if problem not in PROBLEMS:
                raise ConfigError(f"{cfg.source}: no [{section}] section and {problem!r} is not a built-in problem {PROBLEMS}")
            parser.add_section(section)
            parser.set(section, "type", problem)
    elif not parser.has_section("problem"):
        named = [s for s in parser.sections() if s.startswith("problem.")]
        if len(named) != 1:
            raise ConfigError(f"{cfg.source}: need a [problem] section, or exactly one [problem.NAME] section (use --problem)")
        section = named[0]
    cfg.problem_name = section
    cfg.problem = dict(parser.items(section))
    ptype = cfg.problem.get("type", "").strip().lower()
    if ptype not in PROBLEMS:
        _fail(cfg, section, "type", f"must be one of {PROBLEMS}, got {ptype!r}")
    for key in cfg.problem:
        if key not in _PROBLEM_KEYS[ptype]:
            _fail(cfg, section, key, f"unknown key for {ptype}; allowed: {', '.join(sorted(_PROBLEM_KEYS[ptype]))}")

    cfg.solver_params = {name: _parse_solver_section(cfg, parser, name) for name in SOLVERS}

    if parser.has_section("sweep"):
        cfg.sweep = _parse_sweep(cfg, dict(parser.items("sweep")))
    # build once with the configured epsilons so invalid parameters fail before any run
    solver_config(cfg)
    build_problem(cfg)
    return cfg


def _parse_sweep(cfg, raw):
    for key in raw:
        if key not in _SWEEP_KEYS:
            _fail(cfg, "sweep", key, f"unknown key; allowed: {', '.join(sorted(_SWEEP_KEYS))}")
    if "eps_g" not in raw:
        _fail(cfg, "sweep", None, "eps_g list is required")
    eps_g = _floats(cfg, "sweep", "eps_g", raw["eps_g"])
    if any(not 0.0 < e <= 1.0 for e in eps_g):
        _fail(cfg, "sweep", "eps_g", "values must lie in (0, 1]")
    if any(b >= a for a, b in zip(eps_g, eps_g[1:])):
        _fail(cfg, "sweep", "eps_g", "values must be strictly decreasing")
    alpha = _float(cfg, "sweep", "alpha", raw.get("alpha", "1"))
    if not 0.0 < alpha <= 1.0:
        _fail(cfg, "sweep", "alpha", "must lie in (0, 1]")
    power = alpha / (1.0 + alpha)
    if "eps_h_power" in raw:
        power = _float(cfg, "sweep", "eps_h_power", raw["eps_h_power"])
        if power <= 0.0:
            _fail(cfg, "sweep", "eps_h_power", "must be positive")
    if "eps_h" in raw:
        eps_h = _floats(cfg, "sweep", "eps_h", raw["eps_h"])
        if len(eps_h) != len(eps_g):
            _fail(cfg, "sweep", "eps_h", "needs one value per eps_g")
    else:
        eps_h = [e**power for e in eps_g]
    if any(not 0.0 < e <= 1.0 for e in eps_h):
        _fail(cfg, "sweep", "eps_h", "values must lie in (0, 1]")
    workers = _int(cfg, "sweep", "workers", raw.get("workers", "1"))
    if workers < 1:
        _fail(cfg, "sweep", "workers", "must be >= 1")
    return {"eps_g": eps_g, "eps_h": eps_h, "workers": workers}


# ---------------------------------------------------------------- construction


def solver_config(cfg, eps_g=None, eps_h=None):
    """Solver config object for ``cfg``, with the epsilons optionally overridden."""
    params = dict(cfg.solver_params.get(cfg.solver, {}))
    if eps_g is not None:
        params["eps_g"] = eps_g
    if eps_h is not None:
        params["eps_h"] = eps_h
    try:
        return SOLVERS[cfg.solver][0](**params)
    except ConfigError as exc:
        raise ConfigError(f"{_where(cfg, cfg.solver)}: [{cfg.solver}] {exc}") from None


def _start_point(cfg, params, problem, rng, eigvecs=None):
    sec = cfg.problem_name
    text = params.get("start", "random").strip().lower()
    n = problem.n
    if text == "random":
        return problem.manifold.random_point(rng)
    if text == "center" and isinstance(problem, HolderWell):
        return problem.center.copy()
    m = re.fullmatch(r"e(\d+)", text)
    if m and isinstance(problem, Rayleigh) and 1 <= int(m.group(1)) <= n:
        # k-th eigenvector of A in ascending order (a stationary point)
        return eigvecs[:, int(m.group(1)) - 1].copy()
    vals = _floats(cfg, sec, "start", text)
    if len(vals) != n:
        _fail(cfg, sec, "start", f"expected {n} coordinates, got {len(vals)}")
    x = np.asarray(vals)
    if isinstance(problem, Rayleigh):
        nx = np.linalg.norm(x)
        if nx == 0.0:
            _fail(cfg, sec, "start", "start point must be nonzero on the sphere")
        x = x / nx
    return x


def build_problem(cfg, eps_h=None):
    """Return (problem, x0). Both depend only on the problem seed, never on the sweep index."""
    params = cfg.problem
    sec = cfg.problem_name
    ptype = params["type"].strip().lower()
    seed = _int(cfg, sec, "seed", params.get("seed", str(cfg.seed)))
    rng = np.random.default_rng(seed)
    if ptype == "rayleigh":
        if "spectrum" in params:
            spectrum = np.asarray(_floats(cfg, sec, "spectrum", params["spectrum"]))
        else:
            n = _int(cfg, sec, "n", params.get("n", "100"))
            if n < 2:
                _fail(cfg, sec, "n", "must be >= 2")
            spectrum = np.arange(1.0, n + 1.0)
        if "n" in params and _int(cfg, sec, "n", params["n"]) != spectrum.size:
            _fail(cfg, sec, "n", "disagrees with the spectrum length")
        rotate = _bool(cfg, sec, "rotate", params.get("rotate", "true"))
        problem = planted_rayleigh(spectrum, rng, rotate=rotate)
        _, vecs = np.linalg.eigh(problem.A)
        return problem, _start_point(cfg, params, problem, rng, vecs)

    mu = _float(cfg, sec, "mu", params.get("mu", "0.5"))
    diag = _floats(cfg, sec, "b_diag", params.get("b_diag", "-0.5, 1, 2"))
    if "neg_eps_scale" in params:
        # epsilon-coupled saddle: an extra leading eigenvalue -c * eps_h
        c = _float(cfg, sec, "neg_eps_scale", params["neg_eps_scale"])
        if c <= 1.0:
            _fail(cfg, sec, "neg_eps_scale", "must exceed 1 so the saddle is not eps_h-stationary")
        h = eps_h if eps_h is not None else solver_config(cfg).eps_h
        diag = [-c * h] + diag
    n = len(diag)
    center = _floats(cfg, sec, "center", params.get("center", "0"))
    if len(center) == 1:
        center = center * n
    if len(center) != n:
        _fail(cfg, sec, "center", f"expected 1 or {n} values")
    try:
        problem = HolderWell(np.asarray(center), mu, np.diag(diag))
    except ValueError as exc:
        _fail(cfg, sec, None, str(exc))
    return problem, _start_point(cfg, params, problem, rng)


# ---------------------------------------------------------------- running


def with_overrides(cfg, seed=None, solver=None):
    cfg = dataclasses.replace(cfg)
    if seed is not None:
        cfg.seed = int(seed)
    if solver is not None:
        if solver not in SOLVERS:
            raise ConfigError(f"unknown solver {solver!r}")
        cfg.solver = solver
        solver_config(cfg)
    return cfg


def _as_config(config):
    return config if isinstance(config, ExperimentConfig) else load_config(config)


def execute(cfg, eps_g=None, eps_h=None, seed=None):
    scfg = solver_config(cfg, eps_g, eps_h)
    problem, x0 = build_problem(cfg, scfg.eps_h)
    solve = SOLVERS[cfg.solver][1]
    return solve(problem, x0, scfg, seed=cfg.seed if seed is None else seed)


def write_report(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    with open(os.path.join(out_dir, "trace.csv"), "w", encoding="utf-8") as fh:
        fh.write(trace_to_csv(report.records))


def run_single(config, out_dir=None):
    """Run the configured solver once; writes report.json and trace.csv when ``out_dir`` is set."""
    cfg = _as_config(config)
    report = execute(cfg)
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def fit_slope(eps, counts):
    """Least-squares slope of log(count) against log(1/eps).

    Counts are floored at 1 so a run that stops at iteration zero stays finite.
    Returns nan with fewer than MIN_FIT_POINTS points.
    """
    eps = np.asarray(eps, dtype=float)
    counts = np.maximum(np.asarray(counts, dtype=float), 1.0)
    if eps.size < MIN_FIT_POINTS:
        return math.nan
    slope, _ = np.polyfit(np.log(1.0 / eps), np.log(counts), 1)
    return float(slope)


def _sweep_point(args):
    cfg, i, eps_g, eps_h = args
    seed = cfg.seed + i
    report = execute(cfg, eps_g, eps_h, seed)
    point = SweepPoint(
        eps_g=eps_g,
        eps_h=eps_h,
        outer_iters=report.iterations,
        succ_iters=report.successful,
        hv_products=int(report.counters["hess_vec_products"]),
        status=report.status,
        max_sigma=report.max_sigma if report.max_sigma is not None else math.nan,
        seed=seed,
        violations=len(hard(verify_invariants(report))),
    )
    return point, report


def run_sweep(config, out_dir=None, workers=None, keep_reports=False):
    """Run every epsilon point of the ``[sweep]`` section and fit the complexity slopes.

    Point i uses seed master_seed + i. Slopes use converged points only.
    """
    cfg = _as_config(config)
    if cfg.sweep is None:
        raise ConfigError(f"{cfg.source}: no [sweep] section")
    jobs = [(cfg, i, g, h) for i, (g, h) in enumerate(zip(cfg.sweep["eps_g"], cfg.sweep["eps_h"]))]
    workers = workers or cfg.sweep["workers"]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    res = SweepResult(solver=cfg.solver, points=[p for p, _ in results])
    ok = [p for p in res.points if p.status == "converged"]
    res.fitted_points = len(ok)
    res.iter_slope = fit_slope([p.eps_g for p in ok], [p.outer_iters for p in ok])
    res.hv_slope = fit_slope([p.eps_g for p in ok], [p.hv_products for p in ok])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "sweep.csv"), "w", encoding="utf-8") as fh:
            fh.write(res.to_csv())
        with open(os.path.join(out_dir, "sweep.json"), "w", encoding="utf-8") as fh:
            fh.write(res.to_json())
    if keep_reports:
        return res, [r for _, r in results]
    return res
