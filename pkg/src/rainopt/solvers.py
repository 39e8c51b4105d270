"""Extragradient solvers with recursive anchoring.

The stack has three layers:

* ``seg`` runs a fixed-step stochastic extragradient loop and returns a
  half-point chosen uniformly at random (the randomized output is what the
  expectation guarantees are stated for).
* ``epoch_seg`` chains seg calls in two phases: a warm-up phase with a fixed
  step that halves the squared distance to the solution per epoch, then a
  damping phase with geometrically decreasing steps and growing epoch
  lengths that drives the noise floor down as 2^-K.
* ``rain`` solves a sequence of anchored sub-problems whose strong-
  monotonicity moduli double from level to level while the smoothness stays
  below 2L, so the sub-problems get cheaper as the anchor approaches the
  solution.  ``rain_cc`` reduces a merely monotone problem to this setting
  by anchoring once at the initial point with weight min(eps/D, L).

Every solver draws oracle noise through a counted StochasticOracle and the
half-point selection through a separate, caller-supplied stream, so noise
realizations are identical across selection policies.  Passing
``select_rng=None`` selects the last half-point instead, which makes runs
with sigma = 0 fully deterministic (a debugging aid, not covered by the
randomized analysis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .oracle import StochasticOracle
from .problems import AffineMinimaxProblem, AnchoredProblem, Point, anchor_push, grad_norm

__all__ = [
    "TraceRecord",
    "RunTrace",
    "RainSchedule",
    "seg",
    "epoch_seg",
    "rain_schedule",
    "rain",
    "rain_cc",
    "check_stationary",
]

_REL_TOL = 1e-12


@dataclass
class TraceRecord:
    """One completed seg call.

    grad_norm is the exact residual of the problem that call ran on (for
    multi-level runs that is the current anchored sub-problem).
    """

    sfo: int
    grad_norm: float
    level: int
    epoch: int


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    level_outputs: list = field(default_factory=list)
    final: Point | None = None
    half_points: list | None = None

    def sfo_total(self) -> int:
        return self.records[-1].sfo if self.records else 0


@dataclass(frozen=True)
class RainSchedule:
    """Derived constants of a recursive-anchoring run.

    S is the number of doubling levels, floor(log2(L/mu)).  The per-level
    arrays have length max(S, 1): the degenerate case S = 0 (L < 2 mu) is
    served by a single epoch_seg run whose epoch counts are computed with
    the level count replaced by 1.
    """

    S: int
    lambdas: tuple
    N: tuple
    K: tuple
    eps: float
    D: float
    sigma: float
    mu: float
    L: float

    @property
    def levels(self) -> int:
        return len(self.lambdas)


def _check_positive_int(value, name: str, minimum: int) -> int:
    if not isinstance(value, (int, np.integer)):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def _affine_parts(problem):
    if isinstance(problem, AffineMinimaxProblem):
        d = problem.dim
        return problem.M, problem.q, np.empty(0), np.empty((0, d))
    if isinstance(problem, AnchoredProblem):
        base = problem.base
        n = len(problem.anchors)
        aw = np.array([w for w, _ in problem.anchors], dtype=np.float64)
        ap = np.empty((n, base.dim))
        for i, (_, a) in enumerate(problem.anchors):
            ap[i] = a.data
        return base.M, base.q, aw, ap
    raise TypeError(f"unsupported problem type {type(problem).__name__}")


def seg(oracle: StochasticOracle, problem, z0: Point, eta: float, T: int, *,
        select_rng, trace: RunTrace | None = None, level: int = 0, epoch: int = 0,
        record_half_points: bool = False):
    """Stochastic extragradient with step eta for T iterations.

    Each iteration makes two independent oracle calls (one at the current
    point, one at the half point), so exactly 2T calls are consumed.  The
    returned point is the half-point with index drawn uniformly from
    ``select_rng``, or the last one when ``select_rng`` is None.
    """
    T = _check_positive_int(T, "T", 1)
    eta = float(eta)
    eta_max = 1.0 / (4.0 * problem.L)
    if not (0.0 < eta <= eta_max * (1.0 + _REL_TOL)):
        raise ValueError(
            f"eta={eta} outside (0, 1/(4L)] = (0, {eta_max}] for a problem with "
            f"smoothness {problem.L}"
        )
    if z0.dim != problem.dim or z0.d_x != problem.d_x:
        raise ValueError("z0 dimensions do not match the problem")
    if trace is None:
        trace = RunTrace()

    sel_t = T - 1 if select_rng is None else int(select_rng.integers(T))
    M, q, aw, ap = _affine_parts(problem)
    d = problem.dim
    z = z0.data.copy()
    half = np.empty(d)
    halves = np.empty((T, d)) if record_half_points else np.empty((1, d))
    noise_scale = oracle.noise.scale(d) if oracle.noise.sigma > 0.0 else 0.0

    _kernels.seg_loop(M, q, aw, ap, z, eta, T, noise_scale, oracle.stream,
                      sel_t, half, record_half_points, halves)
    oracle.calls += 2 * T

    out = Point(half, problem.d_x)
    trace.records.append(TraceRecord(oracle.calls, grad_norm(problem, out), level, epoch))
    trace.final = out
    if record_half_points:
        trace.half_points = [halves[t].copy() for t in range(T)]
    return out, trace


def epoch_seg(oracle: StochasticOracle, problem, z0: Point, mu: float, L: float,
              N: int, K: int, *, select_rng, trace: RunTrace | None = None,
              level: int = 0):
    """Two-phase epoch schedule around seg.

    Phase 1 runs N epochs with step 1/(4L) and length ceil(8 L/mu); phase 2
    runs K epochs with step 1/(2^(k+3) L) and length ceil(2^(k+5) L/mu).
    Epoch lengths are rounded up, which adds at most 2 oracle calls per
    epoch over the exact-division count.
    """
    N = _check_positive_int(N, "N", 0)
    K = _check_positive_int(K, "K", 1)
    mu = float(mu)
    L = float(L)
    if not (0.0 < mu <= L and math.isfinite(L)):
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if trace is None:
        trace = RunTrace()

    z = z0
    ep = 0
    t_warm = math.ceil(8.0 * L / mu)
    for _ in range(N):
        z, _ = seg(oracle, problem, z, 1.0 / (4.0 * L), t_warm,
                   select_rng=select_rng, trace=trace, level=level, epoch=ep)
        ep += 1
    for k in range(K):
        eta_k = 1.0 / (2.0 ** (k + 3) * L)
        t_k = math.ceil(2.0 ** (k + 5) * L / mu)
        z, _ = seg(oracle, problem, z, eta_k, t_k,
                   select_rng=select_rng, trace=trace, level=level, epoch=ep)
        ep += 1
    return z, trace


def _max_doubling(mu: float, L: float) -> int:
    # largest s >= 0 with mu * 2^s <= L; doubling a float is exact, so this
    # is the true floor of log2(L/mu) without log rounding artifacts
    s = 0
    v = mu
    while v * 2.0 <= L:
        v *= 2.0
        s += 1
    return s


def _min_pow2_exponent(x: float, minimum: int) -> int:
    # smallest integer k >= minimum with 2^k >= x, forgiving the float
    # rounding noise of x itself (the cleared constraints have orders of
    # magnitude of slack, a 1e-12 relative margin changes nothing real)
    if not math.isfinite(x):
        raise ValueError(f"schedule argument overflowed: {x}")
    k = minimum
    v = 2.0 ** minimum
    threshold = x * (1.0 - _REL_TOL)
    while v < threshold:
        k += 1
        v *= 2.0
    return k


def rain_schedule(mu: float, L: float, eps: float, D: float, sigma: float) -> RainSchedule:
    """Level count, anchor weights and per-level epoch counts for rain.

    The first level's warm-up count clears the initial distance term
    512 mu^2 S^2 D^2 / eps^2; later levels need only 3 warm-up epochs.  The
    damping counts clear the per-level noise share
    2048 lambda_s S^2 sigma^2 / (L eps^2) and are floored at 1 so phase 2
    always runs (sigma = 0 would otherwise ask for log of zero).
    """
    mu = float(mu)
    L = float(L)
    eps = float(eps)
    D = float(D)
    sigma = float(sigma)
    if not (0.0 < mu <= L and math.isfinite(L)):
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ValueError(f"eps must be > 0, got {eps}")
    if not (D > 0.0 and math.isfinite(D)):
        raise ValueError(f"D must be > 0, got {D}")
    if not (sigma >= 0.0 and math.isfinite(sigma)):
        raise ValueError(f"sigma must be >= 0, got {sigma}")

    S = _max_doubling(mu, L)
    s_eff = max(S, 1)
    levels = max(S, 1)
    lambdas = []
    lam = mu
    for _ in range(levels):
        lambdas.append(lam)
        lam *= 2.0

    n0_arg = 512.0 * mu * mu * s_eff * s_eff * D * D / (eps * eps)
    n0 = _min_pow2_exponent(n0_arg, 0)
    n_list = [n0] + [3] * (levels - 1)
    k_list = [
        _min_pow2_exponent(2048.0 * lam_s * s_eff * s_eff * sigma * sigma / (L * eps * eps), 1)
        for lam_s in lambdas
    ]
    return RainSchedule(S=S, lambdas=tuple(lambdas), N=tuple(n_list), K=tuple(k_list),
                        eps=eps, D=D, sigma=sigma, mu=mu, L=L)


def rain(oracle: StochasticOracle, problem, z0: Point, mu: float, L: float,
         eps: float, D: float, sigma: float, *, select_rng,
         trace: RunTrace | None = None):
    """Recursive anchoring: solve doubling-modulus sub-problems in sequence.

    Level s solves the current anchored problem with modulus lambda_s and
    smoothness cap 2L, then pushes an anchor of weight lambda_{s+1} at the
    level output.  The caller guarantees ||z0 - z*|| <= D.  With S = 0
    (L < 2 mu) a single epoch_seg run on the base problem is performed.
    """
    sched = rain_schedule(mu, L, eps, D, sigma)
    if problem.mu < mu * (1.0 - _REL_TOL):
        raise ValueError(
            f"problem modulus {problem.mu} is below the schedule modulus {mu}"
        )
    if problem.L > L * (1.0 + _REL_TOL):
        raise ValueError(
            f"problem smoothness {problem.L} exceeds the schedule smoothness {L}"
        )
    if trace is None:
        trace = RunTrace()

    if sched.S == 0:
        out, _ = epoch_seg(oracle, problem, z0, mu, 2.0 * L, sched.N[0], sched.K[0],
                           select_rng=select_rng, trace=trace, level=0)
        return out, trace

    cur = problem
    z = z0
    for s in range(sched.S):
        lam = sched.lambdas[s]
        # anchoring bookkeeping: modulus at least lambda_s, smoothness at most 2L
        assert cur.mu >= lam * (1.0 - _REL_TOL)
        assert cur.L <= 2.0 * L * (1.0 + _REL_TOL)
        z, _ = epoch_seg(oracle, cur, z, lam, 2.0 * L, sched.N[s], sched.K[s],
                         select_rng=select_rng, trace=trace, level=s)
        trace.level_outputs.append(z)
        if s + 1 < sched.S:
            # weight doubles at every level; the final sub-problem would
            # never be evaluated, so its push is skipped
            cur = anchor_push(cur, sched.lambdas[s + 1], z)
    trace.final = z
    return z, trace


def rain_cc(oracle: StochasticOracle, problem, z0: Point, L: float, eps: float,
            D: float, sigma: float, *, select_rng, trace: RunTrace | None = None):
    """Monotone-to-strongly-monotone reduction.

    Anchors once at z0 with weight lambda = min(eps/D, L) and runs rain on
    the anchored problem with modulus lambda and smoothness L + lambda.  An
    eps-accurate output w of the anchored problem satisfies
    ||F(w)|| <= 2 ||G(w)|| + lambda ||z0 - z*||, hence ||F(w)|| <= 3 eps in
    expectation when lambda <= eps/D.
    """
    L = float(L)
    eps = float(eps)
    D = float(D)
    if not (eps > 0.0 and D > 0.0):
        raise ValueError(f"eps and D must be > 0, got eps={eps}, D={D}")
    lam = min(eps / D, L)
    g = anchor_push(problem, lam, z0)
    # the anchored solution is no farther from z0 than z* is, so the
    # caller's bound D stays valid for the anchored problem
    return rain(oracle, g, z0, lam, L + lam, eps, D, sigma,
                select_rng=select_rng, trace=trace)


def check_stationary(problem, z: Point, eps: float) -> bool:
    """True iff the exact operator norm at z is at most eps."""
    eps = float(eps)
    if not (eps > 0.0):
        raise ValueError(f"eps must be > 0, got {eps}")
    return grad_norm(problem, z) <= eps
