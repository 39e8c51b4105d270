"""Ground-truth computations and numerical validators.

Everything here is pure: closed-form solutions come from dense linear
solves, the inequality checkers evaluate operators exactly, and nothing
touches an oracle counter.  Affine problems are the only family supported
because they are the only one whose exact solutions are machine-computable;
the inequalities themselves hold for general monotone operators.

``reference_seg`` is a deliberately naive re-implementation of the
extragradient recursion with injected noise vectors.  It exists so the
production loop can be cross-validated draw for draw; keep it simple and
do not share code with the solver path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import AffineMinimaxProblem, AnchoredProblem, Point, op_eval
from .solvers import RunTrace

__all__ = [
    "ReferenceSolution",
    "exact_saddle",
    "anchored_exact",
    "collapse_affine",
    "verify_nonexpansiveness",
    "verify_anchoring_bound",
    "verify_recursive_bound",
    "verify_monotonicity",
    "reference_seg",
]

RESIDUAL_TOL = 1e-9
SLACK = 1e-9


@dataclass(frozen=True)
class ReferenceSolution:
    """Exact solutions of a problem and of its anchored sub-problems."""

    z_star: Point
    anchored_solutions: tuple
    residuals: tuple

    def __post_init__(self):
        for r in self.residuals:
            if not (r <= RESIDUAL_TOL):
                raise ValueError(f"reference solution residual {r} above {RESIDUAL_TOL}")


def _solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("no unique stationary point: singular system") from exc
    if not np.all(np.isfinite(sol)):
        raise ValueError("no unique stationary point: solve produced non-finite values")
    return sol


def exact_saddle(problem: AffineMinimaxProblem) -> Point:
    """Unique zero of the affine operator, z* = -M^-1 q, with residual check."""
    if not isinstance(problem, AffineMinimaxProblem):
        raise TypeError("exact_saddle expects an affine problem")
    z = _solve(problem.M, -problem.q)
    residual = float(np.linalg.norm(problem.M @ z + problem.q))
    bound = RESIDUAL_TOL * (1.0 + float(np.linalg.norm(problem.q)))
    if residual > bound:
        raise ValueError(f"saddle solve residual {residual} above {bound}")
    return Point(z, problem.d_x)


def anchored_exact(problem: AffineMinimaxProblem, anchors) -> Point:
    """Zero of the anchored operator F(z) + sum w_i (z - a_i).

    Solves (M + (sum w_i) I) w = sum w_i a_i - q.  With no anchors this is
    exact_saddle.
    """
    if not isinstance(problem, AffineMinimaxProblem):
        raise TypeError("anchored_exact expects an affine base problem")
    d = problem.dim
    w_total = 0.0
    rhs = -problem.q.copy()
    for w, a in anchors:
        w = float(w)
        if w <= 0.0:
            raise ValueError(f"anchor weight must be > 0, got {w}")
        pt = a.data if isinstance(a, Point) else np.asarray(a, dtype=np.float64)
        if pt.shape[0] != d:
            raise ValueError("anchor dimension mismatch")
        w_total += w
        rhs += w * pt
    system = problem.M + w_total * np.eye(d)
    sol = _solve(system, rhs)
    residual = float(np.linalg.norm(system @ sol - rhs))
    bound = RESIDUAL_TOL * (1.0 + float(np.linalg.norm(rhs)))
    if residual > bound:
        raise ValueError(f"anchored solve residual {residual} above {bound}")
    return Point(sol, problem.d_x)


def collapse_affine(problem: AnchoredProblem) -> AffineMinimaxProblem:
    """Fold anchor terms into the affine form: M' = M + (sum w) I, q' = q - sum w a."""
    if not isinstance(problem, AnchoredProblem):
        raise TypeError("collapse_affine expects an anchored problem")
    base = problem.base
    w_total = problem.weight_total
    q = base.q.copy()
    for w, a in problem.anchors:
        q = q - w * a.data
    return AffineMinimaxProblem(
        M=base.M + w_total * np.eye(base.dim),
        q=q,
        d_x=base.d_x,
        mu=base.mu + w_total,
        L=base.L + w_total,
    )


def reference_solution(problem: AffineMinimaxProblem, anchor_lists=()) -> ReferenceSolution:
    """Bundle z* and the exact solutions for each given anchor list."""
    z_star = exact_saddle(problem)
    solutions = []
    residuals = [float(np.linalg.norm(op_eval(problem, z_star)))]
    for anchors in anchor_lists:
        w = anchored_exact(problem, anchors)
        solutions.append(w)
        v = op_eval(problem, w).copy()
        for weight, a in anchors:
            pt = a.data if isinstance(a, Point) else np.asarray(a, dtype=np.float64)
            v += weight * (w.data - pt)
        residuals.append(float(np.linalg.norm(v)))
    return ReferenceSolution(
        z_star=z_star,
        anchored_solutions=tuple(solutions),
        residuals=tuple(residuals),
    )


def verify_nonexpansiveness(problem: AffineMinimaxProblem, lam: float, z0: Point) -> bool:
    """Anchoring does not push the solution away.

    With w* the zero of F + lam (. - z0) and z* the zero of F, both
    ||w* - z0|| <= ||z* - z0|| and ||w* - z*|| <= ||z* - z0|| must hold.
    """
    lam = float(lam)
    if lam <= 0.0:
        raise ValueError(f"lam must be > 0, got {lam}")
    z_star = exact_saddle(problem)
    w_star = anchored_exact(problem, [(lam, z0)])
    ref = float(np.linalg.norm(z_star.data - z0.data))
    ok_anchor = float(np.linalg.norm(w_star.data - z0.data)) <= ref + SLACK
    ok_solution = float(np.linalg.norm(w_star.data - z_star.data)) <= ref + SLACK
    return ok_anchor and ok_solution


def verify_anchoring_bound(problem: AffineMinimaxProblem, lam: float, z0: Point,
                           samples) -> bool:
    """||F(w)|| <= 2 ||G(w)|| + lam ||z0 - z*|| for every sample w,

    where G(w) = F(w) + lam (w - z0) is the anchored operator.
    """
    lam = float(lam)
    if lam <= 0.0:
        raise ValueError(f"lam must be > 0, got {lam}")
    z_star = exact_saddle(problem)
    shift = lam * float(np.linalg.norm(z0.data - z_star.data))
    for w in samples:
        fw = op_eval(problem, w)
        gw = fw + lam * (w.data - z0.data)
        lhs = float(np.linalg.norm(fw))
        rhs = 2.0 * float(np.linalg.norm(gw)) + shift
        if lhs > rhs + SLACK:
            return False
    return True


def verify_recursive_bound(trace: RunTrace, problem: AffineMinimaxProblem,
                           mu: float) -> bool:
    """Residual bound of a completed recursive-anchoring run.

    With level outputs z_1 .. z_S and w*_{s-1} the exact solution of the
    sub-problem anchored at z_1 .. z_{s-1} with weights mu 2^i, checks

        ||F(z_S)|| <= 16 mu sum_{s=1..S} 2^{s-1} ||w*_{s-1} - z_s||

    with a magnitude-scaled slack for the accumulation across levels.
    """
    mu = float(mu)
    if mu <= 0.0:
        raise ValueError(f"mu must be > 0, got {mu}")
    outputs = list(trace.level_outputs)
    if not outputs:
        raise ValueError("trace has no level outputs; not a completed multi-level run")
    for z in outputs:
        if z.dim != problem.dim or z.d_x != problem.d_x:
            raise ValueError("trace level outputs do not match the problem dimensions")
    lhs = float(np.linalg.norm(op_eval(problem, outputs[-1])))
    rhs = 0.0
    for s in range(1, len(outputs) + 1):
        anchors = [(mu * 2.0 ** i, outputs[i - 1]) for i in range(1, s)]
        w_prev = anchored_exact(problem, anchors)
        z_s = outputs[s - 1]
        rhs += 2.0 ** (s - 1) * float(np.linalg.norm(w_prev.data - z_s.data))
    rhs *= 16.0 * mu
    return lhs <= rhs + SLACK * (1.0 + rhs)


def verify_monotonicity(problem, mu: float, n_pairs: int, seed: int) -> bool:
    """(F(z) - F(z'))^T (z - z') >= mu ||z - z'||^2 on sampled pairs."""
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    mu = float(mu)
    rng = np.random.default_rng(seed)
    d = problem.dim
    for _ in range(n_pairs):
        z = Point(3.0 * rng.standard_normal(d), problem.d_x)
        zp = Point(3.0 * rng.standard_normal(d), problem.d_x)
        diff = z.data - zp.data
        gap = float((op_eval(problem, z) - op_eval(problem, zp)) @ diff)
        if gap < mu * float(diff @ diff) - SLACK:
            return False
    return True


def _naive_op(problem, z: np.ndarray) -> np.ndarray:
    # straight-line operator evaluation, independent of the solver path
    if isinstance(problem, AffineMinimaxProblem):
        return problem.M @ z + problem.q
    base = problem.base
    v = base.M @ z + base.q
    for w, a in problem.anchors:
        v = v + w * (z - a.data)
    return v


def reference_seg(problem, z0: Point, eta: float, T: int, noise_sequence) -> list:
    """Replay the extragradient recursion with injected noise vectors.

    noise_sequence must hold 2T vectors, one per operator evaluation in call
    order (half step first).  Returns every half-point.
    """
    T = int(T)
    noise = [np.asarray(n, dtype=np.float64) for n in noise_sequence]
    if len(noise) != 2 * T:
        raise ValueError(f"need exactly 2T = {2 * T} noise vectors, got {len(noise)}")
    eta = float(eta)
    z = z0.data.copy()
    halves = []
    for t in range(T):
        g_half = _naive_op(problem, z) + noise[2 * t]
        z_half = z - eta * g_half
        g_full = _naive_op(problem, z_half) + noise[2 * t + 1]
        z = z - eta * g_full
        halves.append(Point(z_half, z0.d_x))
    return halves
