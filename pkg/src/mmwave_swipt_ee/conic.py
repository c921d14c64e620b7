"""Real-valued conic programs and an interior-point backend.

A :class:`ConicProgram` maximizes ``c @ x`` subject to a list of memberships
``A_i @ x + b_i in K_i`` where each ``K_i`` is one of

* ``zero``     -- ``{0}^m``
* ``nonneg``   -- ``R_+^m``
* ``soc``      -- ``{(t, z): ||z|| <= t}``
* ``rsoc``     -- ``{(u, v, z): u, v >= 0, u v >= ||z||^2}``
* ``exp``      -- closure of ``{(x, y, z): y > 0, y exp(x / y) <= z}``

Rotated cones are lowered to ordinary second-order cones before solving.
Solving is delegated to Clarabel (homogeneous embedding, Nesterov-Todd
scaling for symmetric cones, nonsymmetric exponential-cone steps, Ruiz
equilibration).  :func:`kkt_report` re-checks a returned point against the
optimality conditions without touching the backend.
"""

from __future__ import annotations

import enum
import io
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ConeKind",
    "Cone",
    "ConeConstraint",
    "ConicProgram",
    "SolveStatus",
    "ConicSolution",
    "Affine",
    "ProgramBuilder",
    "solve",
    "kkt_report",
    "embed_complex_quadratic",
    "epigraph_log2",
    "dumps_program",
    "loads_program",
]

LN2 = float(np.log(2.0))


class ConeKind(str, enum.Enum):
    ZERO = "zero"
    NONNEG = "nonneg"
    SOC = "soc"
    RSOC = "rsoc"
    EXP = "exp"


@dataclass(frozen=True)
class Cone:
    kind: ConeKind
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", ConeKind(self.kind))
        if self.kind is ConeKind.EXP and self.dim != 3:
            raise ValueError("exponential cone blocks have dimension 3")
        if self.kind is ConeKind.SOC and self.dim < 2:
            raise ValueError("second-order cone blocks need dimension >= 2")
        if self.kind is ConeKind.RSOC and self.dim < 3:
            raise ValueError("rotated cone blocks need dimension >= 3")
        if self.dim < 1:
            raise ValueError("cone dimension must be positive")


@dataclass
class ConeConstraint:
    A: sp.csr_matrix
    b: np.ndarray
    cone: Cone
    name: str = ""

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape[0] != self.b.size or self.b.size != self.cone.dim:
            raise ValueError(
                f"constraint {self.name!r}: map has {self.A.shape[0]} rows, offset {self.b.size}, cone dim {self.cone.dim}"
            )


@dataclass
class ConicProgram:
    num_vars: int
    objective: np.ndarray
    constraints: list[ConeConstraint] = field(default_factory=list)
    var_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        if self.objective.size != self.num_vars:
            raise ValueError("objective length must equal num_vars")
        for con in self.constraints:
            if con.A.shape[1] != self.num_vars:
                raise ValueError(f"constraint {con.name!r} has {con.A.shape[1]} columns, expected {self.num_vars}")
        if not self.var_names:
            self.var_names = [f"x{i}" for i in range(self.num_vars)]

    def lowered(self) -> "ConicProgram":
        """Equivalent program without rotated cones.

        ``(u, v, z) in rsoc``  <=>  ``(u + v, u - v, 2 z) in soc``.
        """
        out = []
        for con in self.constraints:
            if con.cone.kind is not ConeKind.RSOC:
                out.append(con)
                continue
            m = con.cone.dim
            T = np.zeros((m, m))
            T[0, 0] = T[0, 1] = 1.0
            T[1, 0], T[1, 1] = 1.0, -1.0
            T[2:, 2:] = 2.0 * np.eye(m - 2)
            out.append(ConeConstraint(sp.csr_matrix(T) @ con.A, T @ con.b, Cone(ConeKind.SOC, m), con.name))
        return ConicProgram(self.num_vars, self.objective, out, list(self.var_names))

    def stacked(self):
        """``(A, b, cones)`` with every block stacked in order."""
        if not self.constraints:
            return sp.csr_matrix((0, self.num_vars)), np.zeros(0), []
        A = sp.vstack([c.A for c in self.constraints], format="csc")
        b = np.concatenate([c.b for c in self.constraints])
        return A, b, [c.cone for c in self.constraints]

    def objective_value(self, x) -> float:
        return float(self.objective @ np.asarray(x))


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_ERROR = "numerical_error"
    # backend reached reduced accuracy only; callers may verify and accept
    INACCURATE = "inaccurate"


@dataclass
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    status: SolveStatus
    gap: float
    iterations: int
    primal_objective: float = np.nan
    dual_objective: float = np.nan
    solve_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


class Affine:
    """Dense affine expression ``coef @ x + const`` over a fixed variable set."""

    __slots__ = ("coef", "const")

    def __init__(self, coef, const=0.0):
        self.coef = np.asarray(coef, dtype=float)
        self.const = float(const)

    def __add__(self, other):
        if isinstance(other, Affine):
            return Affine(self.coef + other.coef, self.const + other.const)
        return Affine(self.coef, self.const + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Affine):
            return Affine(self.coef - other.coef, self.const - other.const)
        return Affine(self.coef, self.const - float(other))

    def __rsub__(self, other):
        return Affine(-self.coef, float(other) - self.const)

    def __neg__(self):
        return Affine(-self.coef, -self.const)

    def __mul__(self, s):
        s = float(s)
        return Affine(self.coef * s, self.const * s)

    __rmul__ = __mul__

    def value(self, x) -> float:
        return float(self.coef @ x + self.const)


class ProgramBuilder:
    """Incremental construction of a :class:`ConicProgram`.

    Declare every variable with :meth:`var` before building expressions;
    expressions are dense vectors over the declared variables.
    """

    def __init__(self):
        self._names: list[str] = []
        self._blocks: dict[str, np.ndarray] = {}
        self._cons: list[tuple[list[Affine], Cone, str]] = []
        self._objective: Affine | None = None

    @property
    def n(self) -> int:
        return len(self._names)

    def var(self, name: str, size: int = 1) -> np.ndarray:
        if self._cons or self._objective is not None:
            raise RuntimeError("declare all variables before adding constraints")
        start = self.n
        idx = np.arange(start, start + size)
        self._names.extend([name] if size == 1 else [f"{name}[{i}]" for i in range(size)])
        self._blocks[name] = idx
        return idx

    def block(self, name: str) -> np.ndarray:
        return self._blocks[name]

    def x(self, index: int) -> Affine:
        c = np.zeros(self.n)
        c[index] = 1.0
        return Affine(c)

    def const(self, value: float) -> Affine:
        return Affine(np.zeros(self.n), value)

    def linear(self, indices, coefs, const: float = 0.0) -> Affine:
        c = np.zeros(self.n)
        np.add.at(c, np.asarray(indices), np.asarray(coefs, dtype=float))
        return Affine(c, const)

    def add(self, exprs, kind, name: str = "") -> None:
        exprs = [e if isinstance(e, Affine) else self.const(e) for e in exprs]
        self._cons.append((exprs, Cone(ConeKind(kind), len(exprs)), name))

    def nonneg(self, expr: Affine, name: str = "") -> None:
        self.add([expr], ConeKind.NONNEG, name)

    def soc(self, t: Affine, zs, name: str = "") -> None:
        """``||zs|| <= t``."""
        self.add([t, *zs], ConeKind.SOC, name)

    def rsoc(self, u: Affine, v: Affine, zs, name: str = "", balance: float = 1.0) -> None:
        """``u v >= ||zs||^2`` with ``u, v >= 0``.

        Stored as ``(u / a, a v, zs)`` with ``a = balance``; choosing ``a`` near
        ``sqrt(u / v)`` keeps both sides comparable, which matters once the
        cone is lowered to a second-order cone.
        """
        a = float(balance)
        if not (a > 0 and np.isfinite(a)):
            raise ValueError("balance must be positive and finite")
        if a != 1.0:
            u, v = u * (1.0 / a), v * a
        self.add([u, v, *zs], ConeKind.RSOC, name)

    def quad_le(self, zs, rhs: Affine, name: str = "", balance: float = 1.0) -> None:
        """``sum_i zs_i^2 <= rhs`` as the rotated cone ``(rhs / a, a, zs)``.

        ``a = balance`` should be near the expected ``sqrt(rhs)`` so that both
        sides of the rotated cone have similar magnitude.
        """
        self.rsoc(rhs, self.const(1.0), zs, name, float(balance))

    def exp(self, x: Affine, y: Affine, z: Affine, name: str = "") -> None:
        self.add([x, y, z], ConeKind.EXP, name)

    def maximize(self, expr: Affine) -> None:
        self._objective = expr

    def build(self) -> ConicProgram:
        cons = []
        for exprs, cone, name in self._cons:
            A = np.vstack([e.coef for e in exprs])
            b = np.array([e.const for e in exprs])
            cons.append(ConeConstraint(A, b, cone, name))
        obj = self._objective.coef if self._objective is not None else np.zeros(self.n)
        return ConicProgram(self.n, obj, cons, list(self._names))


def embed_complex_quadratic(h, re_idx, im_idx, n_vars: int) -> np.ndarray:
    """Real rows ``M`` with ``M @ x = [Re(h v), Im(h v)]``.

    ``v = x[re_idx] + 1j * x[im_idx]``.  Then ``|h v|^2 = ||M x||^2``, so the
    bound ``|h v|^2 <= s`` is the rotated-cone membership ``(s, 1, M x)``;
    an all-zero ``h`` leaves only ``s >= 0``.
    """
    h = np.asarray(h, dtype=complex).ravel()
    M = np.zeros((2, n_vars))
    M[0, re_idx] = h.real
    M[0, im_idx] = -h.imag
    M[1, re_idx] = h.imag
    M[1, im_idx] = h.real
    return M


def epigraph_log2(b: ProgramBuilder, t: Affine, r: Affine, name: str = "", ref: float = 1.0) -> None:
    """``r <= log2(1 + t)`` via ``(r ln 2 - ln ref, 1, (1 + t) / ref) in K_exp``.

    Any ``ref > 0`` gives the same set; choosing it near ``1 + t`` keeps the
    row coefficients of order one when ``t`` is large.
    """
    if ref <= 0:
        raise ValueError("ref must be positive")
    b.exp(r * LN2 - np.log(ref), b.const(1.0), (t + 1.0) * (1.0 / ref), name)


_STATUS = {
    "Solved": SolveStatus.OPTIMAL,
    "AlmostSolved": SolveStatus.INACCURATE,
    "PrimalInfeasible": SolveStatus.INFEASIBLE,
    "AlmostPrimalInfeasible": SolveStatus.INFEASIBLE,
    "DualInfeasible": SolveStatus.UNBOUNDED,
    "AlmostDualInfeasible": SolveStatus.UNBOUNDED,
    "MaxIterations": SolveStatus.MAX_ITERATIONS,
    "MaxTime": SolveStatus.MAX_ITERATIONS,
    "NumericalError": SolveStatus.NUMERICAL_ERROR,
    "InsufficientProgress": SolveStatus.NUMERICAL_ERROR,
}


def _clarabel_cones(cones):
    import clarabel

    out = []
    for c in cones:
        if c.kind is ConeKind.ZERO:
            out.append(clarabel.ZeroConeT(c.dim))
        elif c.kind is ConeKind.NONNEG:
            out.append(clarabel.NonnegativeConeT(c.dim))
        elif c.kind is ConeKind.SOC:
            out.append(clarabel.SecondOrderConeT(c.dim))
        elif c.kind is ConeKind.EXP:
            out.append(clarabel.ExponentialConeT())
        else:
            raise ValueError(f"cone {c.kind} must be lowered first")
    return out


def solve(program: ConicProgram, tolerance: float = 1e-7, max_iters: int = 200, var_scale=None,
          candidates: bool = False):
    """Solve ``program`` to relative/absolute gap and feasibility ``tolerance``.

    ``var_scale`` gives the expected magnitude of each variable; the backend
    works on ``x / var_scale``, which matters when variables span many
    orders of magnitude.  Returned values are in the original units.

    Backend settings from ``_RETRY_LADDER`` are tried in turn until one
    reaches a definite status; the best-ranked result is returned.  With
    ``candidates=True`` the list of every attempt is returned instead, so a
    caller can pick among reduced-accuracy points with its own criterion.
    """
    import clarabel

    low = program.lowered()
    A, b, cones = low.stacked()
    n = program.num_vars
    d = np.ones(n) if var_scale is None else np.asarray(var_scale, dtype=float)
    if d.shape != (n,) or np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("var_scale must hold one positive finite value per variable")
    A = A @ sp.diags(d)
    P = sp.csc_matrix((n, n))
    q = -program.objective * d
    A_cl = sp.csc_matrix(-A)
    t0 = time.perf_counter()
    attempts = []
    for variant in _RETRY_LADDER:
        settings = _settings(tolerance, max_iters, variant)
        try:
            res = clarabel.DefaultSolver(P, q, A_cl, b, _clarabel_cones(cones), settings).solve()
        except Exception:  # backend factorization or setup failure
            continue
        status = _STATUS.get(str(res.status), SolveStatus.NUMERICAL_ERROR)
        x = np.asarray(res.x, dtype=float) * d
        y = np.asarray(res.z, dtype=float)
        pobj = float(program.objective @ x)
        dobj = float(b @ y)
        attempts.append(ConicSolution(x, y, status, abs(dobj - pobj), int(res.iterations), pobj, dobj,
                                      time.perf_counter() - t0))
        if status in (SolveStatus.OPTIMAL, SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED):
            break
    if not attempts:
        attempts.append(ConicSolution(np.full(n, np.nan), np.full(b.size, np.nan), SolveStatus.NUMERICAL_ERROR,
                                      np.inf, 0, solve_time=time.perf_counter() - t0))
    if candidates:
        return attempts
    # first attempt of the best rank
    return min(attempts, key=lambda s: _RANK[s.status])


# settings tried in turn when the default run stalls; the backend's own
# equilibration occasionally fights a caller-supplied variable scaling
_RETRY_LADDER = (
    {},
    {"equilibrate_enable": False},
    {"max_step_fraction": 0.95},
    {"static_regularization_constant": 1e-10},
    {"equilibrate_max_iter": 50},
)

_RANK = {
    SolveStatus.OPTIMAL: 0,
    SolveStatus.INFEASIBLE: 0,
    SolveStatus.UNBOUNDED: 0,
    SolveStatus.INACCURATE: 1,
    SolveStatus.MAX_ITERATIONS: 2,
    SolveStatus.NUMERICAL_ERROR: 3,
}


def _settings(tolerance, max_iters, variant):
    import clarabel

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = int(max_iters)
    settings.tol_gap_abs = tolerance
    settings.tol_gap_rel = tolerance
    settings.tol_feas = tolerance
    settings.tol_infeas_abs = tolerance
    settings.tol_infeas_rel = tolerance
    # "almost solved" if residuals stall within these looser bounds
    settings.reduced_tol_feas = max(1e-3, tolerance)
    settings.reduced_tol_gap_abs = max(1e-4, tolerance)
    settings.reduced_tol_gap_rel = max(1e-4, tolerance)
    settings.equilibrate_enable = True
    settings.presolve_enable = False
    settings.max_threads = 1
    for key, value in variant.items():
        setattr(settings, key, value)
    return settings


def _cone_distance(kind: ConeKind, s: np.ndarray) -> float:
    """Infeasibility measure of ``s`` with respect to ``kind`` (0 inside)."""
    if kind is ConeKind.ZERO:
        return float(np.max(np.abs(s)))
    if kind is ConeKind.NONNEG:
        return float(max(0.0, -np.min(s)))
    if kind is ConeKind.SOC:
        return float(max(0.0, np.linalg.norm(s[1:]) - s[0]))
    if kind is ConeKind.EXP:
        x, y, z = s
        if y > 0:
            log_lhs = np.log(y) + x / y
            if z > 0 and log_lhs <= np.log(z):
                return 0.0
            return float(np.exp(min(log_lhs, 700.0)) - z)
        return float(max(0.0, -y, x, -z))
    raise ValueError(kind)


def _dual_cone_distance(kind: ConeKind, y: np.ndarray) -> float:
    if kind is ConeKind.ZERO:
        return 0.0
    if kind in (ConeKind.NONNEG, ConeKind.SOC):
        return _cone_distance(kind, y)
    if kind is ConeKind.EXP:
        u, v, w = y
        if u < 0:
            # -u exp(v/u) <= e w
            lhs = np.log(-u) + v / u
            if w <= 0:
                return float(np.exp(min(lhs, 700.0)))
            return float(max(0.0, np.exp(min(lhs, 700.0)) - np.e * w))
        return float(max(0.0, u, -v, -w))
    raise ValueError(kind)


def kkt_report(program: ConicProgram, x, y) -> dict:
    """Optimality residuals of ``(x, y)`` for ``max c x s.t. A x + b in K``.

    The dual is ``min b y s.t. A^T y + c = 0, y in K*``.  Residuals are scaled
    by ``1 + max(|A|, |b|, |c|)``; the gap is relative to ``1 + |c x|``.
    """
    low = program.lowered()
    A, b, cones = low.stacked()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = A @ x + b
    scale = 1.0 + max(np.abs(A).max() if A.nnz else 0.0, np.abs(b).max() if b.size else 0.0, np.abs(low.objective).max())
    primal = dual_cone = 0.0
    pos = 0
    for c in cones:
        sl = slice(pos, pos + c.dim)
        primal = max(primal, _cone_distance(c.kind, s[sl]))
        dual_cone = max(dual_cone, _dual_cone_distance(c.kind, y[sl]))
        pos += c.dim
    stationarity = float(np.max(np.abs(A.T @ y + low.objective))) if low.num_vars else 0.0
    pobj = float(low.objective @ x)
    dobj = float(b @ y)
    return {
        "primal_residual": primal / scale,
        "dual_cone_residual": dual_cone / scale,
        "stationarity": stationarity / scale,
        "gap": abs(dobj - pobj) / (1.0 + abs(pobj)),
        "complementarity": abs(float(s @ y)) / (1.0 + abs(pobj)),
        "primal_objective": pobj,
        "dual_objective": dobj,
    }


# Plain-text program format:
#   conic-program 1
#   vars <n>
#   names <name_0> ... <name_{n-1}>
#   objective <c_0> ... <c_{n-1}>
#   constraint <kind> <dim> <nnz> <name or ->
#   b <b_0> ... <b_{dim-1}>
#   <row> <col> <value>      (nnz lines)
# repeated per constraint.

def dumps_program(program: ConicProgram) -> str:
    out = io.StringIO()
    out.write("conic-program 1\n")
    out.write(f"vars {program.num_vars}\n")
    out.write("names " + " ".join(program.var_names) + "\n")
    out.write("objective " + " ".join(f"{v:.17g}" for v in program.objective) + "\n")
    for con in program.constraints:
        A = con.A.tocoo()
        out.write(f"constraint {con.cone.kind.value} {con.cone.dim} {A.nnz} {con.name or '-'}\n")
        out.write("b " + " ".join(f"{v:.17g}" for v in con.b) + "\n")
        for i, j, v in zip(A.row, A.col, A.data):
            out.write(f"{i} {j} {v:.17g}\n")
    return out.getvalue()


def loads_program(text: str) -> ConicProgram:
    lines = [ln.split() for ln in text.strip().splitlines()]
    if lines[0] != ["conic-program", "1"]:
        raise ValueError("not a conic program file (bad header)")
    n = int(lines[1][1])
    names = lines[2][1:]
    objective = np.array([float(v) for v in lines[3][1:]])
    cons = []
    i = 4
    while i < len(lines):
        head = lines[i]
        if head[0] != "constraint":
            raise ValueError(f"line {i + 1}: expected a constraint header")
        kind, dim, nnz, name = head[1], int(head[2]), int(head[3]), head[4]
        b = np.array([float(v) for v in lines[i + 1][1:]])
        trip = np.array([[float(t) for t in ln] for ln in lines[i + 2: i + 2 + nnz]]).reshape(-1, 3)
        A = sp.csr_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))), shape=(dim, n))
        cons.append(ConeConstraint(A, b, Cone(ConeKind(kind), dim), "" if name == "-" else name))
        i += 2 + nnz
    return ConicProgram(n, objective, cons, names)
