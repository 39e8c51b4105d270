"""Config-driven experiment runner with seeded replications and CSV output.

A run is described by a line-oriented ``key = value`` config file; blank
lines and ``#`` comments are allowed, unknown keys are errors.  The problem
instance is generated once from the problem seed, the exact saddle point is
computed up front, and each replication runs the chosen solver on its own
counter-based stream, so any subset of replications can be reproduced (and
reordered or parallelized) without changing a single row.

Recognized keys::

    problem       scsc | bilinear
    d_x, d_y      block dimensions (ints)
    mu            strong-monotonicity modulus (scsc; must be 0 or absent
                  for bilinear)
    L             smoothness constant
    problem_seed  seed for the instance generator and the start point
    solver        seg | epoch_seg | rain | rain_cc
    sigma         oracle noise level (>= 0)
    eps           stationarity target (rain, rain_cc)
    replications  number of independent runs (>= 1)
    master_seed   seed for the per-replication streams
    output        CSV path
    z0_distance   ||z0 - z*|| of the generated start point (default 1)
    dist_bound    optional override for the distance bound D passed to the
                  solver (default: the true distance, which is exact here)
    select        uniform | last  (half-point selection; default uniform)
    eta, T        seg parameters
    N, K          epoch_seg parameters

Output is a CSV file with ``#`` metadata lines (config echo, stream
algorithm, package version), a fixed header row

    run_id,solver,problem_seed,rep_id,sfo_total,grad_norm_final,dist2_final,wall_ms

one row per replication, and one summary row with rep_id = -1 carrying the
column means.  Float fields use 17 significant digits.  The wall_ms column
is wall-clock time and is the only nondeterministic field.

The worker count is taken from the RAINOPT_WORKERS environment variable
(default 1); rows are ordered by rep_id regardless of completion order.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .oracle import STREAM_ALGORITHM, NoiseModel, StochasticOracle, split_stream, sfo_count
from .problems import Point, gen_bilinear, gen_scsc_quadratic, grad_norm, op_eval
from .reference import (
    anchored_exact,
    exact_saddle,
    verify_anchoring_bound,
    verify_monotonicity,
    verify_nonexpansiveness,
    verify_recursive_bound,
)
from .solvers import epoch_seg, rain, rain_cc, rain_schedule, seg

__all__ = [
    "ExperimentConfig",
    "ReplicationResult",
    "AggregateResult",
    "parse_config",
    "parse_config_file",
    "config_text",
    "run_experiment",
    "run_checks",
    "CSV_HEADER",
]

CSV_HEADER = "run_id,solver,problem_seed,rep_id,sfo_total,grad_norm_final,dist2_final,wall_ms"

# Selection streams live in the same key space as the oracle streams but
# offset far beyond any realistic replication count.
_SELECT_STREAM_OFFSET = 1 << 48

_PROBLEM_FAMILIES = ("scsc", "bilinear")
_SOLVERS = ("seg", "epoch_seg", "rain", "rain_cc")


@dataclass
class ExperimentConfig:
    problem: str
    d_x: int
    d_y: int
    L: float
    problem_seed: int
    solver: str
    sigma: float
    replications: int
    master_seed: int
    output: str
    mu: float = 0.0
    eps: float | None = None
    z0_distance: float = 1.0
    dist_bound: float | None = None
    select: str = "uniform"
    eta: float | None = None
    T: int | None = None
    N: int | None = None
    K: int | None = None


_REQUIRED_KEYS = (
    "problem", "d_x", "d_y", "L", "problem_seed", "solver", "sigma",
    "replications", "master_seed", "output",
)

_PARSERS = {
    "problem": str, "d_x": int, "d_y": int, "mu": float, "L": float,
    "problem_seed": int, "solver": str, "sigma": float, "eps": float,
    "replications": int, "master_seed": int, "output": str,
    "z0_distance": float, "dist_bound": float, "select": str,
    "eta": float, "T": int, "N": int, "K": int,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the line-oriented config format; unknown keys are errors."""
    raw: dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {ln}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _PARSERS:
            raise ValueError(f"config line {ln}: unknown key {key!r}")
        if key in raw:
            raise ValueError(f"config line {ln}: duplicate key {key!r}")
        raw[key] = value.strip()
    missing = [k for k in _REQUIRED_KEYS if k not in raw]
    if missing:
        raise ValueError(f"config is missing required keys: {', '.join(missing)}")
    kwargs = {}
    for key, value in raw.items():
        try:
            kwargs[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: cannot parse {value!r}") from exc
    cfg = ExperimentConfig(**kwargs)
    validate_config(cfg)
    return cfg


def parse_config_file(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_text(cfg: ExperimentConfig) -> str:
    """Canonical `key = value` rendering (used for the echo and the run id)."""
    lines = []
    for key in _PARSERS:
        value = getattr(cfg, key)
        if value is None:
            continue
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def build_problem(cfg: ExperimentConfig):
    if cfg.problem == "scsc":
        return gen_scsc_quadratic(cfg.d_x, cfg.d_y, cfg.mu, cfg.L, cfg.problem_seed)
    if cfg.problem == "bilinear":
        return gen_bilinear(cfg.d_x, cfg.d_y, cfg.L, cfg.problem_seed)
    raise ValueError(f"unknown problem family {cfg.problem!r}")


def validate_config(cfg: ExperimentConfig) -> None:
    """Check every solver precondition before any run starts."""
    if cfg.problem not in _PROBLEM_FAMILIES:
        raise ValueError(f"problem must be one of {_PROBLEM_FAMILIES}, got {cfg.problem!r}")
    if cfg.solver not in _SOLVERS:
        raise ValueError(f"solver must be one of {_SOLVERS}, got {cfg.solver!r}")
    if cfg.select not in ("uniform", "last"):
        raise ValueError(f"select must be 'uniform' or 'last', got {cfg.select!r}")
    if cfg.d_x < 1 or cfg.d_y < 1:
        raise ValueError("d_x and d_y must be >= 1")
    if cfg.problem == "bilinear" and cfg.mu != 0.0:
        raise ValueError("bilinear problems are not strongly monotone; leave mu at 0")
    if cfg.problem == "scsc" and not (0.0 < cfg.mu <= cfg.L):
        raise ValueError(f"scsc needs 0 < mu <= L, got mu={cfg.mu}, L={cfg.L}")
    if not (cfg.L > 0.0 and math.isfinite(cfg.L)):
        raise ValueError(f"L must be > 0, got {cfg.L}")
    if cfg.sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {cfg.sigma}")
    if cfg.replications < 1:
        raise ValueError(f"replications must be >= 1, got {cfg.replications}")
    if not (cfg.z0_distance > 0.0):
        raise ValueError(f"z0_distance must be > 0, got {cfg.z0_distance}")
    if cfg.dist_bound is not None and not (cfg.dist_bound > 0.0):
        raise ValueError(f"dist_bound must be > 0, got {cfg.dist_bound}")

    if cfg.solver == "seg":
        if cfg.eta is None or cfg.T is None:
            raise ValueError("solver 'seg' requires keys eta and T")
        if not (0.0 < cfg.eta <= 1.0 / (4.0 * cfg.L) * (1 + 1e-12)):
            raise ValueError(f"eta={cfg.eta} violates 0 < eta <= 1/(4L) = {1.0 / (4.0 * cfg.L)}")
        if cfg.T < 1:
            raise ValueError(f"T must be >= 1, got {cfg.T}")
    elif cfg.solver == "epoch_seg":
        if cfg.N is None or cfg.K is None:
            raise ValueError("solver 'epoch_seg' requires keys N and K")
        if cfg.N < 0:
            raise ValueError(f"N must be >= 0, got {cfg.N}")
        if cfg.K < 1:
            raise ValueError(f"K must be >= 1, got {cfg.K}")
        if not (0.0 < cfg.mu <= cfg.L):
            raise ValueError(f"epoch_seg needs 0 < mu <= L, got mu={cfg.mu}, L={cfg.L}")
    elif cfg.solver in ("rain", "rain_cc"):
        if cfg.eps is None or not (cfg.eps > 0.0):
            raise ValueError(f"solver {cfg.solver!r} requires eps > 0")
        if cfg.solver == "rain" and not (0.0 < cfg.mu <= cfg.L):
            raise ValueError(f"rain needs 0 < mu <= L, got mu={cfg.mu}, L={cfg.L}")


@dataclass
class ReplicationResult:
    rep_id: int
    sfo_total: int
    grad_norm_final: float
    dist2_final: float
    wall_ms: float


@dataclass
class AggregateResult:
    run_id: str
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    csv_path: str = ""

    def mean(self, column: str) -> float:
        return self.summary[column]["mean"]


def _start_point(problem, z_star: Point, cfg: ExperimentConfig) -> Point:
    rng = np.random.default_rng([cfg.problem_seed, 1])
    u = rng.standard_normal(problem.dim)
    norm = float(np.linalg.norm(u))
    if norm < 1e-12:
        u = np.zeros(problem.dim)
        u[0] = 1.0
        norm = 1.0
    return Point(z_star.data + cfg.z0_distance * (u / norm), problem.d_x)


def _run_replication(cfg: ExperimentConfig, problem, z0: Point, z_star: Point,
                     dist_bound: float, rep_id: int) -> ReplicationResult:
    oracle = StochasticOracle(NoiseModel(cfg.sigma), split_stream(cfg.master_seed, rep_id))
    select_rng = None
    if cfg.select == "uniform":
        select_rng = split_stream(cfg.master_seed, rep_id + _SELECT_STREAM_OFFSET)
    t0 = time.perf_counter()
    if cfg.solver == "seg":
        out, _ = seg(oracle, problem, z0, cfg.eta, cfg.T, select_rng=select_rng)
    elif cfg.solver == "epoch_seg":
        out, _ = epoch_seg(oracle, problem, z0, cfg.mu, cfg.L, cfg.N, cfg.K,
                           select_rng=select_rng)
    elif cfg.solver == "rain":
        out, _ = rain(oracle, problem, z0, cfg.mu, cfg.L, cfg.eps, dist_bound,
                      cfg.sigma, select_rng=select_rng)
    elif cfg.solver == "rain_cc":
        out, _ = rain_cc(oracle, problem, z0, cfg.L, cfg.eps, dist_bound,
                         cfg.sigma, select_rng=select_rng)
    else:  # pragma: no cover - validate_config rejects this earlier
        raise ValueError(f"unknown solver {cfg.solver!r}")
    wall_ms = (time.perf_counter() - t0) * 1e3
    dist2 = float(np.sum((out.data - z_star.data) ** 2))
    return ReplicationResult(
        rep_id=rep_id,
        sfo_total=sfo_count(oracle),
        grad_norm_final=grad_norm(problem, out),
        dist2_final=dist2,
        wall_ms=wall_ms,
    )


def _replication_task(payload):
    cfg, problem, z0, z_star, dist_bound, rep_id = payload
    return _run_replication(cfg, problem, z0, z_star, dist_bound, rep_id)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _summarize(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    n = arr.shape[0]
    se = float(arr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return {
        "mean": float(arr.mean()),
        "se": se,
        "min": float(arr.min()),
        "max": float(arr.max()),
    }


def worker_count() -> int:
    """Worker count from RAINOPT_WORKERS (default 1)."""
    raw = os.environ.get("RAINOPT_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"RAINOPT_WORKERS must be an integer, got {raw!r}") from None
    return max(n, 1)


def run_experiment(cfg: ExperimentConfig) -> AggregateResult:
    """Generate the problem, run all replications, write the CSV."""
    validate_config(cfg)
    problem = build_problem(cfg)
    z_star = exact_saddle(problem)
    z0 = _start_point(problem, z_star, cfg)
    true_dist = float(np.linalg.norm(z0.data - z_star.data))
    dist_bound = cfg.dist_bound if cfg.dist_bound is not None else true_dist
    run_id = hashlib.sha256(config_text(cfg).encode()).hexdigest()[:12]

    payloads = [(cfg, problem, z0, z_star, dist_bound, rep) for rep in range(cfg.replications)]
    workers = worker_count()
    if workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replication_task, payloads))
    else:
        rows = [_replication_task(p) for p in payloads]
    rows.sort(key=lambda r: r.rep_id)

    summary = {
        "sfo_total": _summarize([r.sfo_total for r in rows]),
        "grad_norm_final": _summarize([r.grad_norm_final for r in rows]),
        "dist2_final": _summarize([r.dist2_final for r in rows]),
        "wall_ms": _summarize([r.wall_ms for r in rows]),
    }

    lines = [f"# rainopt {__version__}", f"# stream = {STREAM_ALGORITHM}"]
    for cfg_line in config_text(cfg).splitlines():
        lines.append(f"# cfg {cfg_line}")
    lines.append(CSV_HEADER)
    for r in rows:
        lines.append(
            f"{run_id},{cfg.solver},{cfg.problem_seed},{r.rep_id},{r.sfo_total},"
            f"{_fmt(r.grad_norm_final)},{_fmt(r.dist2_final)},{_fmt(r.wall_ms)}"
        )
    lines.append(
        f"{run_id},{cfg.solver},{cfg.problem_seed},-1,{_fmt(summary['sfo_total']['mean'])},"
        f"{_fmt(summary['grad_norm_final']['mean'])},{_fmt(summary['dist2_final']['mean'])},"
        f"{_fmt(summary['wall_ms']['mean'])}"
    )
    out_dir = os.path.dirname(cfg.output)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    with open(cfg.output, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")

    return AggregateResult(run_id=run_id, config=cfg, rows=rows, summary=summary,
                           csv_path=cfg.output)


# ---------------------------------------------------------------------------
# check suites

def _independent_schedule(mu, L, eps, D, sigma):
    # straight-line evaluation of the schedule formulas, kept separate from
    # the production doubling loops on purpose
    S = math.floor(math.log2(L / mu))
    s_eff = max(S, 1)
    levels = max(S, 1)
    lambdas = [mu * 2.0 ** s for s in range(levels)]
    n0 = max(0, math.ceil(math.log2(512.0 * mu ** 2 * s_eff ** 2 * D ** 2 / eps ** 2)))
    n_list = [n0] + [3] * (levels - 1)
    k_list = []
    for lam in lambdas:
        arg = 2048.0 * lam * s_eff ** 2 * sigma ** 2 / (L * eps ** 2)
        k_list.append(max(1, math.ceil(math.log2(arg))) if arg > 0 else 1)
    return S, lambdas, n_list, k_list


def _schedule_grid():
    grid = []
    for mu in (0.25, 1.0, 3.0):
        for kappa in (1.0, 1.5, 2.0, 8.0, 100.0):
            for d_bound in (0.1, 1.0, 10.0):
                for eps in (0.05, 0.3):
                    for sigma in (0.0, 0.7):
                        grid.append((mu, mu * kappa, eps, d_bound, sigma))
    return grid


def _check_schedule(seed: int, report) -> bool:
    ok_all = True
    for mu, L, eps, d_bound, sigma in _schedule_grid():
        sched = rain_schedule(mu, L, eps, d_bound, sigma)
        S, lambdas, n_list, k_list = _independent_schedule(mu, L, eps, d_bound, sigma)
        ok = (
            sched.S == S
            and np.allclose(sched.lambdas, lambdas, rtol=0, atol=0)
            and list(sched.N) == n_list
            and list(sched.K) == k_list
        )
        ok_all &= ok
    report("schedule formulas on parameter grid", ok_all)
    sched = rain_schedule(1.0, 8.0, 0.3, 1.0, 1.0)
    ok = sched.S == 3 and sched.lambdas == (1.0, 2.0, 4.0) and sched.N[0] == 16
    report("schedule reference case (S=3, N_0=16)", ok)
    return ok_all and ok


def _check_oracle(seed: int, report) -> bool:
    ok_all = True
    problem = gen_scsc_quadratic(2, 2, 1.0, 4.0, seed)
    z = Point(np.zeros(4), 2)
    exact = op_eval(problem, z)
    n = 1_000_000

    oracle = StochasticOracle(NoiseModel(1.0), split_stream(seed, 0))
    spot = np.array([oracle.eval(problem, z) for _ in range(100)])
    block_oracle = StochasticOracle(NoiseModel(1.0), split_stream(seed, 0))
    block = exact + block_oracle.noise_block(n, 4)
    ok = np.array_equal(spot, block[:100])
    report("one-call path matches block path bit for bit", ok)
    ok_all &= ok

    noise = block - exact
    mean_abs = float(np.abs(noise.mean(axis=0)).max())
    ok = mean_abs <= 4e-3
    report(f"oracle unbiasedness (max |mean| = {mean_abs:.2e})", ok)
    ok_all &= ok

    energy = float((noise ** 2).sum(axis=1).mean())
    ok = abs(energy - 1.0) <= 1e-2 and energy <= 1.01
    report(f"oracle noise energy (mean = {energy:.4f})", ok)
    ok_all &= ok

    zero_oracle = StochasticOracle(NoiseModel(0.0), split_stream(seed, 1))
    vals = np.array([zero_oracle.eval(problem, z) for _ in range(10)])
    ok = np.array_equal(vals, np.tile(exact, (10, 1))) and zero_oracle.calls == 10
    report("sigma = 0 collapses to the exact operator", ok)
    ok_all &= ok

    counted = StochasticOracle(NoiseModel(0.5), split_stream(seed, 2))
    seg(counted, problem, Point(np.ones(4), 2), 1.0 / (4 * problem.L), 5, select_rng=None)
    ok = sfo_count(counted) == 10
    report("seg consumes exactly two calls per iteration", ok)
    ok_all &= ok

    a = split_stream(seed, 0).standard_normal(100_000)
    b = split_stream(seed, 1).standard_normal(100_000)
    again = split_stream(seed, 0).standard_normal(100_000)
    r = float(np.corrcoef(a, b)[0, 1])
    ok = np.array_equal(a, again) and not np.array_equal(a, b) and abs(r) < 1e-2
    report(f"stream splitting (replication correlation r = {r:+.4f})", ok)
    ok_all &= ok
    return ok_all


def _check_lemmas(seed: int, report) -> bool:
    rng = np.random.default_rng(seed)
    ok_all = True

    ok = True
    for i in range(10):
        if rng.uniform() < 0.5:
            mu = float(rng.uniform(0.05, 2.0))
            problem = gen_scsc_quadratic(2, 3, mu, mu * float(rng.uniform(1.0, 8.0)),
                                         int(rng.integers(1 << 30)))
        else:
            problem = gen_bilinear(2, 2, float(rng.uniform(0.5, 4.0)), int(rng.integers(1 << 30)))
        ok &= verify_monotonicity(problem, problem.mu, 100, int(rng.integers(1 << 30)))
    report("monotonicity modulus on sampled pairs", ok)
    ok_all &= ok

    ok = True
    for i in range(50):
        if rng.uniform() < 0.5:
            mu = float(rng.uniform(0.05, 2.0))
            problem = gen_scsc_quadratic(2, 2, mu, mu * float(rng.uniform(1.0, 8.0)),
                                         int(rng.integers(1 << 30)))
        else:
            problem = gen_bilinear(2, 2, float(rng.uniform(0.5, 4.0)), int(rng.integers(1 << 30)))
        lam = float(10.0 ** rng.uniform(-2, 2))
        z0 = Point(3.0 * rng.standard_normal(problem.dim), problem.d_x)
        ok &= verify_nonexpansiveness(problem, lam, z0)
    report("anchored solutions are non-expansive", ok)
    ok_all &= ok

    ok = True
    for i in range(20):
        mu = float(rng.uniform(0.0, 1.5))
        if mu > 0:
            problem = gen_scsc_quadratic(2, 2, mu, mu * float(rng.uniform(1.0, 6.0)),
                                         int(rng.integers(1 << 30)))
        else:
            problem = gen_bilinear(2, 2, float(rng.uniform(0.5, 4.0)), int(rng.integers(1 << 30)))
        lam = float(10.0 ** rng.uniform(-2, 1))
        z0 = Point(2.0 * rng.standard_normal(problem.dim), problem.d_x)
        samples = [Point(3.0 * rng.standard_normal(problem.dim), problem.d_x) for _ in range(5)]
        ok &= verify_anchoring_bound(problem, lam, z0, samples)
    report("residual bound under single anchoring", ok)
    ok_all &= ok

    ok = True
    for sigma in (0.0, 0.5):
        problem = gen_scsc_quadratic(2, 2, 1.0, 8.0, seed + 17)
        z_star = exact_saddle(problem)
        z0 = Point(z_star.data + np.ones(problem.dim) / 2.0, problem.d_x)
        oracle = StochasticOracle(NoiseModel(sigma), split_stream(seed, 3))
        _, trace = rain(oracle, problem, z0, 1.0, 8.0, 1.0, 1.0, sigma,
                        select_rng=split_stream(seed, 4))
        ok &= verify_recursive_bound(trace, problem, 1.0)
    report("recursive residual bound on completed runs", ok)
    ok_all &= ok

    ok = True
    for i in range(10):
        mu = float(rng.uniform(0.05, 2.0))
        problem = gen_scsc_quadratic(3, 2, mu, mu * float(rng.uniform(1.0, 10.0)),
                                     int(rng.integers(1 << 30)))
        z_star = exact_saddle(problem)
        ok &= grad_norm(problem, z_star) <= 1e-9 * (1.0 + float(np.linalg.norm(problem.q)))
        w = anchored_exact(problem, [(1.0, z_star)])
        ok &= float(np.linalg.norm(w.data - z_star.data)) <= 1e-9
    report("closed-form solutions have tiny residuals", ok)
    ok_all &= ok
    return ok_all


def run_checks(suite: str, seed: int = 0) -> int:
    """Run a validator sweep; returns 0 iff every check passed."""
    suites = {"lemmas": [_check_lemmas], "oracle": [_check_oracle],
              "schedule": [_check_schedule]}
    if suite == "all":
        selected = [_check_lemmas, _check_oracle, _check_schedule]
    elif suite in suites:
        selected = suites[suite]
    else:
        raise ValueError(f"unknown suite {suite!r}; choose lemmas, oracle, schedule or all")

    failures = []

    def report(name: str, ok: bool) -> None:
        print(f"check {name:<52s} {'pass' if ok else 'FAIL'}")
        if not ok:
            failures.append(name)

    for fn in selected:
        fn(seed, report)
    return 0 if not failures else 1
