"""Minimax test problems described by their gradient operators.

A saddle-point problem min_x max_y f(x, y) is represented here through the
operator

    F(z) = (grad_x f(x, y), -grad_y f(x, y)),    z = (x, y),

whose zeros are exactly the stationary points of f.  Every concrete family
in this module is affine, F(z) = M z + q, with the block structure

    M = [[ P,    A ],
         [-A^T,  Q ]],    P, Q symmetric,

which is the operator of a quadratic game.  Affine operators are the
workhorse test problems because the saddle point, the strong-monotonicity
modulus and the smoothness constant are all exactly computable, so solver
guarantees can be checked against closed-form ground truth.

Anchored (recursively regularized) problems add exact terms
w_i * (z - a_i) on top of a base operator; they are kept as an explicit
list of (weight, anchor) pairs instead of being folded into (M, q) so that
multi-level runs retain their per-level structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Point",
    "AffineMinimaxProblem",
    "AnchoredProblem",
    "op_eval",
    "anchor_push",
    "grad_norm",
    "gen_scsc_quadratic",
    "gen_bilinear",
    "save_problem",
    "load_problem",
    "problem_to_text",
    "problem_from_text",
]

# Verification tolerance for constructed constants (mu, L); double-precision
# eigensolves on desk-scale matrices stay well inside this.
CONSTANT_TOL = 1e-9

_FORMAT_TAG = "affine-minimax/1"


def _as_vector(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class Point:
    """A joint iterate z = (x, y) stored as one flat vector split at d_x."""

    data: np.ndarray
    d_x: int

    def __post_init__(self):
        a = _as_vector(self.data, "data").copy()
        if not np.all(np.isfinite(a)):
            raise ValueError("point entries must be finite")
        if not 1 <= self.d_x < a.shape[0]:
            raise ValueError(
                f"d_x must satisfy 1 <= d_x < dim, got d_x={self.d_x}, dim={a.shape[0]}"
            )
        a.flags.writeable = False
        object.__setattr__(self, "data", a)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.data[: self.d_x]

    @property
    def y(self) -> np.ndarray:
        return self.data[self.d_x :]


def _check_block_structure(M: np.ndarray, d_x: int) -> None:
    d = M.shape[0]
    scale = 1.0 + float(np.abs(M).max(initial=0.0))
    P = M[:d_x, :d_x]
    Q = M[d_x:, d_x:]
    A = M[:d_x, d_x:]
    B = M[d_x:, :d_x]
    if np.abs(P - P.T).max(initial=0.0) > CONSTANT_TOL * scale:
        raise ValueError("top-left block of M must be symmetric")
    if np.abs(Q - Q.T).max(initial=0.0) > CONSTANT_TOL * scale:
        raise ValueError("bottom-right block of M must be symmetric")
    if d_x < d and np.abs(B + A.T).max(initial=0.0) > CONSTANT_TOL * scale:
        raise ValueError("off-diagonal blocks of M must satisfy M21 = -M12^T")


@dataclass(frozen=True, eq=False)
class AffineMinimaxProblem:
    """Quadratic game with operator F(z) = M z + q.

    mu is a valid strong-monotonicity modulus (all eigenvalues of the
    symmetric part of M are >= mu) and L a valid smoothness constant
    (spectral norm of M is <= L); both are checked at construction.
    """

    M: np.ndarray
    q: np.ndarray
    d_x: int
    mu: float
    L: float

    def __post_init__(self):
        M = np.asarray(self.M, dtype=np.float64).copy()
        q = _as_vector(self.q, "q").copy()
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"M must be square, got shape {M.shape}")
        d = M.shape[0]
        if q.shape[0] != d:
            raise ValueError(f"q has length {q.shape[0]}, expected {d}")
        if not (1 <= self.d_x < d):
            raise ValueError(f"d_x must satisfy 1 <= d_x < {d}, got {self.d_x}")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(q))):
            raise ValueError("M and q must be finite")
        if not (self.mu >= 0.0 and np.isfinite(self.mu)):
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not (self.L > 0.0 and np.isfinite(self.L)):
            raise ValueError(f"L must be > 0, got {self.L}")
        if self.mu > self.L:
            raise ValueError(f"mu={self.mu} exceeds L={self.L}")
        _check_block_structure(M, self.d_x)
        sym_min = float(np.linalg.eigvalsh((M + M.T) / 2.0)[0])
        if sym_min < self.mu - CONSTANT_TOL:
            raise ValueError(
                f"symmetric part has eigenvalue {sym_min}, below modulus mu={self.mu}"
            )
        norm = float(np.linalg.norm(M, 2))
        if norm > self.L + CONSTANT_TOL:
            raise ValueError(f"spectral norm {norm} exceeds smoothness L={self.L}")
        M.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "q", q)

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    @property
    def d_y(self) -> int:
        return self.dim - self.d_x


@dataclass(frozen=True, eq=False)
class AnchoredProblem:
    """A base problem plus exact regularization terms w_i * (z - a_i).

    The operator is G(z) = F_base(z) + sum_i w_i (z - a_i); each term adds
    w_i to both the strong-monotonicity modulus and the smoothness constant.
    """

    base: AffineMinimaxProblem
    anchors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not isinstance(self.base, AffineMinimaxProblem):
            raise TypeError("base must be an AffineMinimaxProblem")
        norm = []
        for item in self.anchors:
            w, a = item
            w = float(w)
            if not (w > 0.0 and np.isfinite(w)):
                raise ValueError(f"anchor weight must be > 0, got {w}")
            if not isinstance(a, Point):
                raise TypeError("anchor must be a Point")
            if a.dim != self.base.dim or a.d_x != self.base.d_x:
                raise ValueError("anchor dimensions do not match the base problem")
            norm.append((w, a))
        object.__setattr__(self, "anchors", tuple(norm))

    @property
    def weight_total(self) -> float:
        return float(sum(w for w, _ in self.anchors))

    @property
    def mu(self) -> float:
        return self.base.mu + self.weight_total

    @property
    def L(self) -> float:
        return self.base.L + self.weight_total

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def d_x(self) -> int:
        return self.base.d_x

    @property
    def d_y(self) -> int:
        return self.base.d_y


def _check_point(problem, z: Point) -> None:
    if not isinstance(z, Point):
        raise TypeError("z must be a Point")
    if z.dim != problem.dim or z.d_x != problem.d_x:
        raise ValueError(
            f"point of dim {z.dim} (d_x={z.d_x}) does not match problem of dim "
            f"{problem.dim} (d_x={problem.d_x})"
        )


def op_eval(problem, z: Point) -> np.ndarray:
    """Exact operator value at z; never touches any oracle counter."""
    _check_point(problem, z)
    if isinstance(problem, AffineMinimaxProblem):
        return problem.M @ z.data + problem.q
    if isinstance(problem, AnchoredProblem):
        v = problem.base.M @ z.data + problem.base.q
        for w, a in problem.anchors:
            v += w * (z.data - a.data)
        return v
    raise TypeError(f"unsupported problem type {type(problem).__name__}")


def anchor_push(problem, weight: float, anchor: Point) -> AnchoredProblem:
    """Add an exact regularization term weight * (z - anchor) to the operator.

    The base problem is left untouched; the reported modulus and smoothness
    both grow by weight.
    """
    weight = float(weight)
    if not (weight > 0.0 and np.isfinite(weight)):
        raise ValueError(f"anchor weight must be > 0, got {weight}")
    _check_point(problem, anchor)
    if isinstance(problem, AffineMinimaxProblem):
        return AnchoredProblem(base=problem, anchors=((weight, anchor),))
    if isinstance(problem, AnchoredProblem):
        return AnchoredProblem(base=problem.base, anchors=problem.anchors + ((weight, anchor),))
    raise TypeError(f"unsupported problem type {type(problem).__name__}")


def grad_norm(problem, z: Point) -> float:
    """Euclidean norm of the exact operator at z."""
    return float(np.linalg.norm(op_eval(problem, z)))


def _haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, n))
    qmat, r = np.linalg.qr(g)
    # fix signs so the factorization (and thus the draw) is unique
    return qmat * np.sign(np.diag(r))


def _random_symmetric(n: int, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    eigs = rng.uniform(lo, hi, size=n)
    eigs[0] = lo  # pin the extreme eigenvalue so the modulus is tight
    basis = _haar_orthogonal(n, rng)
    s = basis @ np.diag(eigs) @ basis.T
    return (s + s.T) / 2.0


def gen_scsc_quadratic(d_x: int, d_y: int, mu: float, L: float, seed: int) -> AffineMinimaxProblem:
    """Random strongly-monotone quadratic game with verified constants.

    P and Q are drawn with spectra in [mu, max(mu, L/2)] and the coupling
    block with norm at most L/2; the coupling is shrunk afterwards if the
    assembled operator would exceed the requested smoothness L.
    Deterministic given the seed.
    """
    if d_x < 1 or d_y < 1:
        raise ValueError("d_x and d_y must be >= 1")
    if not (0.0 < mu <= L):
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    rng = np.random.default_rng(seed)
    hi = max(mu, L / 2.0)
    P = _random_symmetric(d_x, mu, hi, rng)
    Q = _random_symmetric(d_y, mu, hi, rng)
    A = rng.standard_normal((d_x, d_y))
    a_norm = float(np.linalg.norm(A, 2))
    A *= (L / 2.0) / a_norm
    M = np.block([[P, A], [-A.T, Q]])
    if float(np.linalg.norm(M, 2)) > L:
        # shrink the coupling so that ||sym part|| + ||skew part|| <= L
        sym_top = float(np.linalg.eigvalsh((M + M.T) / 2.0)[-1])
        allowed = max(L - sym_top, 0.0)
        A *= allowed / (L / 2.0)
        M = np.block([[P, A], [-A.T, Q]])
    q = rng.standard_normal(d_x + d_y)
    return AffineMinimaxProblem(M=M, q=q, d_x=d_x, mu=mu, L=L)


def gen_bilinear(d_x: int, d_y: int, L: float, seed: int) -> AffineMinimaxProblem:
    """Random bilinear coupling game: P = Q = 0, q = 0, unique saddle at 0.

    Requires d_x == d_y so that the coupling matrix is square and can be
    made invertible by construction (singular values in [L/2, L]).
    """
    if d_x != d_y:
        raise ValueError(
            f"bilinear family needs d_x == d_y for a unique stationary point, "
            f"got {d_x} != {d_y}"
        )
    if d_x < 1:
        raise ValueError("d_x must be >= 1")
    if not (L > 0.0 and np.isfinite(L)):
        raise ValueError(f"L must be > 0, got {L}")
    rng = np.random.default_rng(seed)
    u = _haar_orthogonal(d_x, rng)
    v = _haar_orthogonal(d_x, rng)
    svals = rng.uniform(L / 2.0, L, size=d_x)
    A = u @ np.diag(svals) @ v.T
    a_norm = float(np.linalg.norm(A, 2))
    if a_norm > L:
        A *= L / a_norm
    zero_p = np.zeros((d_x, d_x))
    M = np.block([[zero_p, A], [-A.T, zero_p]])
    q = np.zeros(2 * d_x)
    return AffineMinimaxProblem(M=M, q=q, d_x=d_x, mu=0.0, L=L)


def _fmt(x: float) -> str:
    # 17 significant digits round-trip any float64 exactly
    return format(float(x), ".17g")


def problem_to_text(problem: AffineMinimaxProblem) -> str:
    """Serialize to the self-describing text format.

    Layout: `key = value` header lines (format tag, dimensions, constants),
    then a row-major dump of M (one line per row) introduced by `M:`, then
    the vector q on one line introduced by `q:`.  All numbers are written
    with 17 significant digits so a reload is bit-exact.
    """
    if not isinstance(problem, AffineMinimaxProblem):
        raise TypeError("only affine problems are serializable")
    lines = [
        f"format = {_FORMAT_TAG}",
        f"d_x = {problem.d_x}",
        f"d_y = {problem.d_y}",
        f"mu = {_fmt(problem.mu)}",
        f"L = {_fmt(problem.L)}",
        "M:",
    ]
    for row in problem.M:
        lines.append(" ".join(_fmt(v) for v in row))
    lines.append("q:")
    lines.append(" ".join(_fmt(v) for v in problem.q))
    return "\n".join(lines) + "\n"


def problem_from_text(text: str) -> AffineMinimaxProblem:
    """Parse the text format written by problem_to_text."""
    header: dict[str, str] = {}
    rows: list[list[float]] = []
    qvec: list[float] | None = None
    section = "header"
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "M:":
            section = "M"
            continue
        if line == "q:":
            section = "q"
            continue
        if section == "header":
            if "=" not in line:
                raise ValueError(f"line {ln}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
        elif section == "M":
            rows.append([float(t) for t in line.split()])
        else:
            if qvec is not None:
                raise ValueError(f"line {ln}: multiple q sections")
            qvec = [float(t) for t in line.split()]
    if header.get("format") != _FORMAT_TAG:
        raise ValueError(f"unsupported or missing format tag: {header.get('format')!r}")
    for key in ("d_x", "d_y", "mu", "L"):
        if key not in header:
            raise ValueError(f"missing header key {key!r}")
    d_x = int(header["d_x"])
    d_y = int(header["d_y"])
    d = d_x + d_y
    if len(rows) != d or any(len(r) != d for r in rows):
        raise ValueError(f"matrix dump must be {d} rows of {d} values")
    if qvec is None or len(qvec) != d:
        raise ValueError(f"q must have {d} values")
    return AffineMinimaxProblem(
        M=np.array(rows, dtype=np.float64),
        q=np.array(qvec, dtype=np.float64),
        d_x=d_x,
        mu=float(header["mu"]),
        L=float(header["L"]),
    )


def save_problem(problem: AffineMinimaxProblem, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(problem_to_text(problem))


def load_problem(path) -> AffineMinimaxProblem:
    with open(path, "r", encoding="ascii") as fh:
        return problem_from_text(fh.read())
