"""Real conic intermediate representation and the solver adapter.

Every design problem in this package is a convex program over Hermitian
matrix variables and a handful of real scalars.  Builders describe such a
program with :class:`ConicProblem`; :func:`solve` lowers it to the real
standard form ``A x + s = b, s in K`` and hands it to Clarabel.

Hermitian parametrization
-------------------------
An ``n x n`` Hermitian matrix ``X`` is stored as ``n**2`` reals::

    [X[0,0], ..., X[n-1,n-1],  Re X[0,1], Im X[0,1], Re X[0,2], Im X[0,2], ...]

diagonal first, then the strictly-upper entries in row-major order, each as a
``(re, im)`` pair.  PSD constraints on a complex Hermitian expression ``E``
are imposed on the real symmetric lift::

    [[Re E, -Im E],
     [Im E,  Re E]]        (2n x 2n)

which is PSD iff ``E`` is PSD (its spectrum is that of ``E``, doubled).
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import io
import time
from typing import Iterable, Sequence

import clarabel
import numpy as np
import scipy.sparse as sp

from .errors import ContractError

__all__ = [
    "Expr",
    "ConicProblem",
    "ConicSolution",
    "SolverSettings",
    "Status",
    "hermitian_param",
    "hermitian_unparam",
    "hermitian_basis",
    "real_lift",
    "lift_is_psd",
    "solve",
    "constraint_violations",
    "dump_problem",
]


# ---------------------------------------------------------------------------
# Hermitian <-> real parametrization
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _offdiag_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    iu, ju = np.triu_indices(n, k=1)
    return iu, ju


def hermitian_param(A: np.ndarray) -> np.ndarray:
    """Map a Hermitian matrix to its ``n**2`` real coordinates."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    iu, ju = _offdiag_index(n)
    off = A[iu, ju]
    out = np.empty(n * n)
    out[:n] = np.real(np.diag(A))
    out[n::2] = np.real(off)
    out[n + 1::2] = np.imag(off)
    return out


def hermitian_unparam(x: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`hermitian_param`."""
    x = np.asarray(x, dtype=float)
    if x.shape != (n * n,):
        raise ContractError(f"expected {n * n} coordinates, got {x.shape}")
    iu, ju = _offdiag_index(n)
    A = np.zeros((n, n), dtype=complex)
    A[np.arange(n), np.arange(n)] = x[:n]
    off = x[n::2] + 1j * x[n + 1::2]
    A[iu, ju] = off
    A[ju, iu] = np.conj(off)
    return A


@functools.lru_cache(maxsize=64)
def hermitian_basis(n: int) -> np.ndarray:
    """Complex ``(n*n, n*n)`` matrix ``B`` with ``A.ravel() == B @ hermitian_param(A)``."""
    B = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        B[i * n + i, i] = 1.0
    iu, ju = _offdiag_index(n)
    for p, (i, j) in enumerate(zip(iu, ju)):
        B[i * n + j, n + 2 * p] = 1.0
        B[j * n + i, n + 2 * p] = 1.0
        B[i * n + j, n + 2 * p + 1] = 1j
        B[j * n + i, n + 2 * p + 1] = -1j
    B.setflags(write=False)
    return B


def real_lift(A: np.ndarray) -> np.ndarray:
    """The ``[[Re, -Im], [Im, Re]]`` symmetric embedding of a complex matrix."""
    A = np.asarray(A)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def lift_is_psd(A: np.ndarray, tol: float = 0.0) -> bool:
    return bool(np.linalg.eigvalsh(real_lift(A)).min() >= -tol)


@functools.lru_cache(maxsize=64)
def _svec_lift_map(n: int):
    """Index plan for svec(real_lift(E)) in Clarabel's PSD-triangle layout.

    Clarabel stacks the upper triangle column by column and scales
    off-diagonal entries by sqrt(2).  Returns ``(src, part, scale)`` where
    entry ``k`` of the svec equals ``scale[k] * part_k(E.ravel()[src[k]])``
    and ``part`` is 0 for the real part, 1 for the imaginary part.
    """
    src, part, scale = [], [], []
    m = 2 * n
    for c in range(m):
        for r in range(c + 1):
            s = 1.0 if r == c else np.sqrt(2.0)
            if c < n:
                src.append(r * n + c), part.append(0), scale.append(s)
            elif r < n:
                src.append(r * n + (c - n)), part.append(1), scale.append(-s)
            else:
                src.append((r - n) * n + (c - n)), part.append(0), scale.append(s)
    return np.array(src), np.array(part), np.array(scale)


# ---------------------------------------------------------------------------
# Affine expressions
# ---------------------------------------------------------------------------

class Expr:
    """Affine complex matrix expression ``E(z) = coef @ z + const``.

    ``coef`` has one row per matrix entry (row-major) and one column per real
    decision coordinate declared so far; narrower expressions are zero-padded
    when combined.
    """

    __array_priority__ = 100
    __slots__ = ("shape", "coef", "const")

    def __init__(self, shape, coef, const):
        self.shape = tuple(shape)
        self.coef = np.asarray(coef, dtype=complex)
        self.const = np.asarray(const, dtype=complex).reshape(-1)
        if self.coef.shape[0] != self.size or self.const.shape[0] != self.size:
            raise ContractError("coefficient rows do not match the expression shape")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def width(self) -> int:
        return self.coef.shape[1]

    @classmethod
    def constant(cls, value) -> "Expr":
        value = np.atleast_2d(np.asarray(value, dtype=complex))
        return cls(value.shape, np.zeros((value.size, 0)), value.ravel())

    def _padded(self, width: int) -> np.ndarray:
        if self.width == width:
            return self.coef
        out = np.zeros((self.size, width), dtype=complex)
        out[:, :self.width] = self.coef
        return out

    def _coerce(self, other) -> "Expr":
        if isinstance(other, Expr):
            return other
        arr = np.asarray(other, dtype=complex)
        if arr.ndim == 0:
            if self.shape[0] == self.shape[1] and self.size > 1:
                arr = arr * np.eye(self.shape[0])
            else:
                arr = np.full(self.shape, arr)
        return Expr.constant(arr.reshape(self.shape))

    def __add__(self, other):
        other = self._coerce(other)
        if other.shape != self.shape:
            raise ContractError(f"shape mismatch {self.shape} vs {other.shape}")
        w = max(self.width, other.width)
        return Expr(self.shape, self._padded(w) + other._padded(w), self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Expr(self.shape, -self.coef, -self.const)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, Expr):
            raise ContractError("product of two affine expressions is not affine")
        scalar = complex(scalar)
        return Expr(self.shape, self.coef * scalar, self.const * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / complex(scalar))

    # -- structural maps --------------------------------------------------

    def _linear(self, T: np.ndarray, shape) -> "Expr":
        """Apply a fixed linear map ``T`` to the flattened entries."""
        return Expr(shape, T @ self.coef, T @ self.const)

    @property
    def H(self) -> "Expr":
        n, m = self.shape
        perm = np.arange(n * m).reshape(n, m).T.ravel()
        return Expr((m, n), np.conj(self.coef[perm]), np.conj(self.const[perm]))

    def real(self) -> "Expr":
        return Expr(self.shape, self.coef.real, self.const.real)

    def congruence(self, A: np.ndarray) -> "Expr":
        """``A @ E @ A^H``."""
        A = np.atleast_2d(np.asarray(A, dtype=complex))
        return self._linear(np.kron(A, np.conj(A)), (A.shape[0], A.shape[0]))

    def left(self, A: np.ndarray) -> "Expr":
        """``A @ E``."""
        A = np.atleast_2d(np.asarray(A, dtype=complex))
        return self._linear(np.kron(A, np.eye(self.shape[1])), (A.shape[0], self.shape[1]))

    def matvec(self, v: np.ndarray) -> "Expr":
        """``E @ v`` as a column expression."""
        v = np.asarray(v, dtype=complex).reshape(-1, 1)
        return self._linear(np.kron(np.eye(self.shape[0]), v.T), (self.shape[0], 1))

    def quad(self, a: np.ndarray) -> "Expr":
        """Real scalar ``a^H E a`` (E assumed Hermitian)."""
        a = np.asarray(a, dtype=complex).ravel()
        w = np.kron(np.conj(a), a)[None, :]
        return self._linear(w, (1, 1)).real()

    def quads(self, A: np.ndarray) -> "Expr":
        """Column of ``a_l^H E a_l`` for every column ``a_l`` of ``A``."""
        A = np.asarray(A, dtype=complex)
        W = (np.conj(A)[:, None, :] * A[None, :, :]).reshape(-1, A.shape[1]).T
        return self._linear(W, (A.shape[1], 1)).real()

    def bilinear(self, a: np.ndarray, b: np.ndarray) -> "Expr":
        """Complex scalar ``a^H E b``."""
        a = np.asarray(a, dtype=complex).ravel()
        b = np.asarray(b, dtype=complex).ravel()
        return self._linear(np.kron(np.conj(a), b)[None, :], (1, 1))

    def diag(self) -> "Expr":
        """Diagonal as a real column (E assumed Hermitian)."""
        n = self.shape[0]
        idx = np.arange(n) * (n + 1)
        return Expr((n, 1), self.coef[idx].real, self.const[idx].real)

    def reshape(self, shape) -> "Expr":
        return Expr(shape, self.coef, self.const)

    def value(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = self.coef @ z[: self.width] + self.const
        return out.reshape(self.shape)


def vstack(exprs: Sequence[Expr]) -> Expr:
    """Stack column expressions."""
    w = max(e.width for e in exprs)
    coef = np.vstack([e._padded(w) for e in exprs])
    const = np.concatenate([e.const for e in exprs])
    return Expr((coef.shape[0], 1), coef, const)


def bmat(blocks: Sequence[Sequence[Expr]]) -> Expr:
    """Assemble a block matrix of expressions."""
    rows = [sum(b.shape[0] for b in [row[0]]) for row in blocks]
    cols = [b.shape[1] for b in blocks[0]]
    n, m = sum(rows), sum(cols)
    w = max(b.width for row in blocks for b in row)
    coef = np.zeros((n * m, w), dtype=complex)
    const = np.zeros(n * m, dtype=complex)
    r0 = 0
    for bi, row in enumerate(blocks):
        c0 = 0
        for bj, blk in enumerate(row):
            if blk.shape != (rows[bi], cols[bj]):
                raise ContractError("inconsistent block shapes")
            rr, cc = np.meshgrid(np.arange(blk.shape[0]) + r0, np.arange(blk.shape[1]) + c0,
                                 indexing="ij")
            dst = (rr * m + cc).ravel()
            coef[dst] = blk._padded(w)
            const[dst] = blk.const
            c0 += blk.shape[1]
        r0 += rows[bi]
    return Expr((n, m), coef, const)


def eye_times(scalar: Expr, n: int) -> Expr:
    """``s * I_n`` for a scalar expression ``s``."""
    idx = np.arange(n) * (n + 1)
    coef = np.zeros((n * n, scalar.width), dtype=complex)
    const = np.zeros(n * n, dtype=complex)
    coef[idx] = scalar.coef[0]
    const[idx] = scalar.const[0]
    return Expr((n, n), coef, const)


# ---------------------------------------------------------------------------
# Problem container
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class Constraint:
    kind: str          # "eq", "nonneg", "psd", "soc"
    expr: Expr
    tag: str
    head: Expr | None = None   # soc only: the bounding scalar
    # holds by construction of the parametrization; re-checked after the
    # solve but not passed to the engine (it would only add dependent rows)
    implied: bool = False


class ConicProblem:
    """Convex program over Hermitian matrix variables and real scalars.

    The objective is ``minimize ||r(z)||_2^2`` for an affine residual ``r``;
    the adapter realizes it as ``minimize t`` subject to ``||r|| <= t``.
    """

    def __init__(self, name: str = ""):
        self.name = name
        self.matrix_vars: dict[str, tuple[int, int]] = {}
        self.scalar_vars: dict[str, int] = {}
        self.constraints: list[Constraint] = []
        self.objective: Expr | None = None
        self.nvar = 0

    # -- declarations -----------------------------------------------------

    def _check_name(self, name):
        if name in self.matrix_vars or name in self.scalar_vars:
            raise ContractError(f"variable {name!r} declared twice")

    def hermitian(self, name: str, n: int) -> Expr:
        self._check_name(name)
        off = self.nvar
        self.matrix_vars[name] = (off, n)
        self.nvar += n * n
        coef = np.zeros((n * n, self.nvar), dtype=complex)
        coef[:, off:] = hermitian_basis(n)
        return Expr((n, n), coef, np.zeros(n * n))

    def scalar(self, name: str) -> Expr:
        self._check_name(name)
        off = self.nvar
        self.scalar_vars[name] = off
        self.nvar += 1
        coef = np.zeros((1, self.nvar))
        coef[0, off] = 1.0
        return Expr((1, 1), coef, [0.0])

    def var(self, name: str) -> Expr:
        if name in self.matrix_vars:
            off, n = self.matrix_vars[name]
            coef = np.zeros((n * n, off + n * n), dtype=complex)
            coef[:, off:] = hermitian_basis(n)
            return Expr((n, n), coef, np.zeros(n * n))
        off = self.scalar_vars[name]
        coef = np.zeros((1, off + 1))
        coef[0, off] = 1.0
        return Expr((1, 1), coef, [0.0])

    # -- constraints ------------------------------------------------------

    def add_eq(self, expr: Expr, tag: str = "eq", implied: bool = False) -> None:
        """``expr == 0``; square matrix expressions are treated as Hermitian."""
        self.constraints.append(Constraint("eq", expr, tag, implied=implied))

    def add_nonneg(self, expr: Expr, tag: str = "ineq") -> None:
        """Elementwise ``expr >= 0`` on the real part."""
        self.constraints.append(Constraint("nonneg", expr.real(), tag))

    def add_psd(self, expr: Expr, tag: str = "psd") -> None:
        if expr.shape[0] != expr.shape[1]:
            raise ContractError("PSD constraint needs a square expression")
        self.constraints.append(Constraint("psd", expr, tag))

    def add_soc(self, head: Expr, body: Expr, tag: str = "soc") -> None:
        """``||body||_2 <= head`` for a real scalar ``head``."""
        self.constraints.append(Constraint("soc", body, tag, head=head))

    def minimize_sum_squares(self, residual: Expr) -> None:
        self.objective = residual

    # -- introspection ----------------------------------------------------

    def count(self, tag: str) -> int:
        return sum(c.tag == tag for c in self.constraints)

    def rows(self, tag: str) -> int:
        return sum(len(_real_rows(c)[1]) for c in self.constraints if c.tag == tag)

    def unpack(self, z: np.ndarray) -> dict[str, np.ndarray | float]:
        out: dict[str, np.ndarray | float] = {}
        for name, (off, n) in self.matrix_vars.items():
            out[name] = hermitian_unparam(z[off:off + n * n], n)
        for name, off in self.scalar_vars.items():
            out[name] = float(z[off])
        return out


# ---------------------------------------------------------------------------
# Lowering to real rows
# ---------------------------------------------------------------------------

def _herm_rows(coef: np.ndarray, const: np.ndarray, n: int):
    """Real coordinates (hermitian_param layout) of a Hermitian expression."""
    diag = np.arange(n) * (n + 1)
    iu, ju = _offdiag_index(n)
    off = iu * n + ju
    C = np.vstack([coef[diag].real, np.stack([coef[off].real, coef[off].imag], 1).reshape(-1, coef.shape[1])])
    c = np.concatenate([const[diag].real, np.stack([const[off].real, const[off].imag], 1).ravel()])
    return C, c


def _vector_rows(coef: np.ndarray, const: np.ndarray):
    C, c = [coef.real], [const.real]
    # imaginary parts at rounding level (e.g. after a congruence) carry no rows
    scale = max(1.0, np.abs(coef).max(initial=0.0), np.abs(const).max(initial=0.0))
    if max(np.abs(coef.imag).max(initial=0.0), np.abs(const.imag).max(initial=0.0)) > 1e-14 * scale:
        C.append(coef.imag)
        c.append(const.imag)
    return np.vstack(C), np.concatenate(c)


def _real_rows(con: Constraint):
    """Return ``(C, c)`` with the constraint's real rows ``C z + c``."""
    e = con.expr
    if con.kind == "eq":
        if e.shape[0] == e.shape[1] and e.shape[0] > 1:
            return _herm_rows(e.coef, e.const, e.shape[0])
        return _vector_rows(e.coef, e.const)
    if con.kind == "nonneg":
        return e.coef.real, e.const.real
    if con.kind == "psd":
        src, part, scale = _svec_lift_map(e.shape[0])
        C = np.where(part[:, None] == 0, e.coef[src].real, e.coef[src].imag) * scale[:, None]
        c = np.where(part == 0, e.const[src].real, e.const[src].imag) * scale
        return C, c
    if con.kind == "soc":
        body_C, body_c = _vector_rows(e.coef, e.const)
        w = max(body_C.shape[1], con.head.width)
        C = np.zeros((1 + body_C.shape[0], w))
        C[0, :con.head.width] = con.head.coef.real[0]
        C[1:, :body_C.shape[1]] = body_C
        return C, np.concatenate([[con.head.const.real[0]], body_c])
    raise ContractError(f"unknown constraint kind {con.kind!r}")


def _pad(C: np.ndarray, width: int) -> np.ndarray:
    if C.shape[1] == width:
        return C
    out = np.zeros((C.shape[0], width))
    out[:, :C.shape[1]] = C
    return out


def _compress_residual(G: np.ndarray, g: np.ndarray, rtol: float = 1e-13):
    """Exact rank reduction of ``||G z + g||``.

    Returns ``(Gc, gc, rest)`` with ``||G z + g||^2 == ||Gc z + gc||^2 + rest**2``
    for every ``z``.  The beampattern residual has one row per grid angle but
    rank at most ``2M``, so this shrinks the cone from ~1800 to ~20 rows.
    """
    cols = np.flatnonzero(np.abs(G).max(axis=0) > 0)
    if cols.size == 0:
        return np.zeros((0, G.shape[1])), np.zeros(0), float(np.linalg.norm(g))
    U, s, Vt = np.linalg.svd(G[:, cols], full_matrices=False)
    keep = s > rtol * s[0]
    U, s, Vt = U[:, keep], s[keep], Vt[keep]
    Gc = np.zeros((s.size, G.shape[1]))
    Gc[:, cols] = s[:, None] * Vt
    gc = U.T @ g
    rest = float(np.linalg.norm(g - U @ gc))
    return Gc, gc, rest


# ---------------------------------------------------------------------------
# Solve
# ---------------------------------------------------------------------------

class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_LIMIT = "NumericalLimit"


@dataclasses.dataclass(frozen=True)
class SolverSettings:
    tol_feas: float = 1e-7
    tol_gap: float = 1e-7
    max_iter: int = 200
    engine_tol: float = 1e-9
    compress_objective: bool = True
    verbose: bool = False
    retry: bool = True
    phase_one: bool = True


# Engine options tried in order when an attempt stalls or fails the
# independent constraint re-check.  Each entry overrides the defaults.
_RETRY_LADDER = (
    {},
    {"engine_tol": 1e-8},
    {"iterative_refinement_reltol": 1e-14, "iterative_refinement_abstol": 1e-14,
     "iterative_refinement_max_iter": 50},
    {"max_step_fraction": 0.9},
    {"equilibrate_enable": False},
)


@dataclasses.dataclass
class ConicSolution:
    status: Status
    values: dict
    objective: float
    residuals: dict
    z: np.ndarray | None = None
    iterations: int = 0
    solve_time: float = 0.0
    engine_status: str = ""
    lower_bound: float = float("nan")   # squared dual objective, a bound on the optimal value

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def constraint_violations(problem: ConicProblem, z: np.ndarray) -> dict[str, float]:
    """Worst violation per constraint tag, evaluated straight from the expressions.

    Independent of the lowering: PSD blocks are checked by the eigenvalues of
    the complex expression itself, not of the lifted svec rows.
    """
    worst: dict[str, float] = {}
    for con in problem.constraints:
        val = con.expr.value(z)
        if con.kind == "eq":
            v = float(np.abs(val).max(initial=0.0))
        elif con.kind == "nonneg":
            v = float(max(0.0, -np.real(val).min()))
        elif con.kind == "psd":
            herm = 0.5 * (val + val.conj().T)
            v = float(max(0.0, -np.linalg.eigvalsh(herm).min()))
        else:
            v = float(max(0.0, np.linalg.norm(val) - np.real(con.head.value(z)).item()))
        worst[con.tag] = max(worst.get(con.tag, 0.0), v)
    return worst


_ENGINE_STATUS = {
    "Solved": Status.OPTIMAL,
    "AlmostSolved": Status.OPTIMAL,
    "PrimalInfeasible": Status.INFEASIBLE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
    "AlmostDualInfeasible": Status.UNBOUNDED,
}


def _lower(problem: ConicProblem, settings: SolverSettings):
    nz = problem.nvar
    has_obj = problem.objective is not None and problem.objective.size > 0
    nx = nz + 1
    blocks_A, blocks_b, cones = [], [], []

    def push(C, c, cone, negate=True):
        A = np.zeros((C.shape[0], nx))
        A[:, :C.shape[1]] = -C if negate else C
        blocks_A.append(A)
        blocks_b.append(c if negate else -c)
        cones.append(cone)

    # Clarabel: A x + s = b.  For s = C z + c:  A = -C, b = c.
    for con in problem.constraints:
        if con.implied:
            continue
        C, c = _real_rows(con)
        C = _pad(C, nz)
        if con.kind == "eq":
            push(C, c, clarabel.ZeroConeT(C.shape[0]), negate=False)
        elif con.kind == "nonneg":
            push(C, c, clarabel.NonnegativeConeT(C.shape[0]))
        elif con.kind == "psd":
            push(C, c, clarabel.PSDTriangleConeT(2 * con.expr.shape[0]))
        else:
            push(C, c, clarabel.SecondOrderConeT(C.shape[0]))

    if has_obj:
        G, g = _vector_rows(problem.objective.coef, problem.objective.const)
        G = _pad(G, nz)
        if settings.compress_objective:
            G, g, rest = _compress_residual(G, g)
            if rest > 0:
                G = np.vstack([G, np.zeros((1, nz))])
                g = np.concatenate([g, [rest]])
        head = np.zeros((1, nz + 1))
        head[0, nz] = 1.0
        body = np.hstack([G, np.zeros((G.shape[0], 1))])
        A = -np.vstack([head, body])
        blocks_A.append(A)
        blocks_b.append(np.concatenate([[0.0], g]))
        cones.append(clarabel.SecondOrderConeT(A.shape[0]))
    else:
        # keep the epigraph variable pinned so the program stays bounded
        A = np.zeros((1, nx))
        A[0, nz] = 1.0
        blocks_A.append(A)
        blocks_b.append(np.zeros(1))
        cones.append(clarabel.ZeroConeT(1))

    A = sp.csc_matrix(np.vstack(blocks_A)) if blocks_A else sp.csc_matrix((0, nx))
    A.eliminate_zeros()
    b = np.concatenate(blocks_b)
    q = np.zeros(nx)
    q[nz] = 1.0
    P = sp.csc_matrix((nx, nx))
    return P, q, A, b, cones


def solve(problem: ConicProblem, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve ``problem``; see :class:`Status` for the outcome contract.

    ``OPTIMAL`` is only reported when the engine converged *and* an
    independent re-evaluation of every constraint stays within
    ``settings.tol_feas`` with relative gap below ``settings.tol_gap``.
    With ``settings.retry`` an attempt that misses this bar is repeated with
    the next entry of a fixed ladder of engine options, so the outcome stays
    deterministic.
    """
    settings = settings or SolverSettings()
    P, q, A, b, cones = _lower(problem, settings)
    ladder = _RETRY_LADDER if settings.retry else _RETRY_LADDER[:1]
    elapsed, iters = 0.0, 0
    for attempt, extra in enumerate(ladder):
        sol = _solve_once(problem, settings, P, q, A, b, cones, dict(extra))
        elapsed += sol.solve_time
        iters += sol.iterations
        # a certificate of infeasibility/unboundedness is not retried
        if sol.status is not Status.NUMERICAL_LIMIT:
            break
    sol.solve_time, sol.iterations = elapsed, iters
    sol.residuals["attempts"] = attempt + 1
    if sol.status is Status.NUMERICAL_LIMIT and settings.phase_one:
        _phase_one_check(problem, settings, sol)
    return sol


def _phase_one(problem: ConicProblem) -> ConicProblem:
    """Same constraints with every cone/inequality loosened by a common slack ``s``; minimize ``s``."""
    p1 = ConicProblem(f"{problem.name}/phase-one")
    p1.matrix_vars = dict(problem.matrix_vars)
    p1.scalar_vars = dict(problem.scalar_vars)
    p1.nvar = problem.nvar
    s = p1.scalar("__slack")
    for con in problem.constraints:
        if con.implied:
            continue
        e = con.expr
        if con.kind == "eq":
            p1.add_eq(e, con.tag)
        elif con.kind == "nonneg":
            ones = Expr(e.shape, np.repeat(s._padded(p1.nvar), e.size, axis=0), np.zeros(e.size))
            p1.add_nonneg(e + ones, con.tag)
        elif con.kind == "psd":
            p1.add_psd(e + eye_times(s, e.shape[0]), con.tag)
        else:
            p1.add_soc(con.head + s, e, con.tag)
    p1.add_nonneg(s, "slack")
    p1.minimize_sum_squares(s)
    return p1


def _phase_one_check(problem: ConicProblem, settings: SolverSettings, sol: ConicSolution) -> None:
    """Bounded-penalty infeasibility test run after the main solve stalls.

    If the smallest uniform slack that makes every constraint hold is
    provably (by its dual bound) above ``10 * tol_feas``, no point meets the
    constraints at the tolerance used to accept solutions, and the outcome is
    turned into ``INFEASIBLE``.  Otherwise the status is left alone.
    """
    p1 = _phase_one(problem)
    P, q, A, b, cones = _lower(p1, settings)
    out = _solve_once(p1, settings, P, q, A, b, cones, {})
    sol.solve_time += out.solve_time
    sol.iterations += out.iterations
    if out.status is Status.INFEASIBLE:
        # even the equalities cannot be met
        sol.status, sol.engine_status = Status.INFEASIBLE, "PhaseOne:" + out.engine_status
        return
    if out.z is None:
        return
    bound = np.sqrt(max(out.lower_bound, 0.0))
    sol.residuals["phase_one_slack"] = float(out.values["__slack"])
    sol.residuals["phase_one_bound"] = float(bound)
    if bound > 10 * settings.tol_feas:
        sol.status, sol.engine_status = Status.INFEASIBLE, "PhaseOne"


def _solve_once(problem, settings, P, q, A, b, cones, extra: dict) -> ConicSolution:
    tol = extra.pop("engine_tol", settings.engine_tol)
    opts = clarabel.DefaultSettings()
    opts.verbose = settings.verbose
    opts.max_iter = settings.max_iter
    opts.tol_feas = tol
    opts.tol_gap_abs = tol
    opts.tol_gap_rel = tol
    opts.max_threads = 1
    for k, v in extra.items():
        setattr(opts, k, v)

    t0 = time.perf_counter()
    engine = clarabel.DefaultSolver(P, q, A, b, cones, opts)
    sol = engine.solve()
    elapsed = time.perf_counter() - t0
    engine_status = str(sol.status)

    status = _ENGINE_STATUS.get(engine_status, Status.NUMERICAL_LIMIT)
    x = np.asarray(sol.x, dtype=float)
    z = x[:problem.nvar]
    residuals = {"primal": float(sol.r_prim), "dual": float(sol.r_dual)}
    pobj, dobj = float(sol.obj_val), float(sol.obj_val_dual)
    residuals["gap"] = abs(pobj - dobj) / max(1.0, abs(pobj))

    if status is not Status.OPTIMAL:
        return ConicSolution(status, {}, float("nan"), residuals, None,
                             int(sol.iterations), elapsed, engine_status)

    viol = constraint_violations(problem, z)
    residuals["violation"] = max(viol.values(), default=0.0)
    if residuals["violation"] > settings.tol_feas or residuals["gap"] > settings.tol_gap:
        status = Status.NUMERICAL_LIMIT

    obj = 0.0
    if problem.objective is not None and problem.objective.size > 0:
        obj = float(np.sum(np.abs(problem.objective.value(z)) ** 2))
    lower = max(dobj, 0.0) ** 2 if problem.objective is not None else 0.0
    return ConicSolution(status, problem.unpack(z), obj, residuals, z,
                         int(sol.iterations), elapsed, engine_status, lower)


# ---------------------------------------------------------------------------
# Text dump
# ---------------------------------------------------------------------------

def dump_problem(problem: ConicProblem, fh: io.TextIOBase | None = None) -> str:
    """Write the real standard form ``A x + s = b, s in K`` as plain text.

    Layout::

        # conic-dump v1 <name>
        nvar <n>                     (x has n+1 entries; the last is the epigraph t)
        var matrix <name> <offset> <dim>
        var scalar <name> <offset>
        cone <kind> <dim> <tag>      one per cone, in row order
        b <row> <value>              nonzero right-hand sides
        A <row> <col> <value>        nonzero coefficients

    Floats use ``repr`` so the dump is lossless.
    """
    P, q, A, b, cones = _lower(problem, SolverSettings(compress_objective=False))
    tags = [c.tag for c in problem.constraints if not c.implied] + ["objective"]
    buf = io.StringIO()
    buf.write(f"# conic-dump v1 {problem.name}\n")
    buf.write(f"nvar {problem.nvar}\n")
    for name, (off, n) in problem.matrix_vars.items():
        buf.write(f"var matrix {name} {off} {n}\n")
    for name, off in problem.scalar_vars.items():
        buf.write(f"var scalar {name} {off}\n")
    for cone, tag in zip(cones, tags):
        kind = type(cone).__name__.replace("ConeT", "")
        buf.write(f"cone {kind} {cone.dim} {tag}\n")
    for i in np.flatnonzero(b):
        buf.write(f"b {i} {b[i]!r}\n")
    coo = A.tocoo()
    for i, j, v in sorted(zip(coo.row, coo.col, coo.data)):
        buf.write(f"A {i} {j} {float(v)!r}\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def sum_exprs(exprs: Iterable[Expr]) -> Expr:
    exprs = list(exprs)
    total = exprs[0]
    for e in exprs[1:]:
        total = total + e
    return total
