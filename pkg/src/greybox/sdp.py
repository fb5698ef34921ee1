"""Block-LMI modeling layer and semidefinite solve contract.

Problems are built from named matrix variables and symmetric block
grids of affine expressions, canonicalized to the standard primal form

    minimize    c^T x
    subject to  F0_k + sum_i x_i Fi_k  is PSD,   k = 1..K

(one PSD cone per LMI; strict inequalities are converted by an
epsilon-shift of the identity), and solved by an interior-point conic
backend. Every solution reported optimal is re-verified here by dense
eigendecomposition of all substituted blocks; that check is independent
of the backend and is never skipped.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import SolverFailure, SolverUnavailable

_SENSES = (">=0", "<=0", ">0", "<0")

#: default shift used to realize strict LMIs: X > 0 becomes X - eps*I >= 0
DEFAULT_EPS_LMI = 1e-6

#: base feasibility tolerance; scaled per block by (1 + ||block||)
DEFAULT_FEAS_TOL = 1e-7

_solver_lock = threading.Lock()  # cvxopt options are process-global


class AffExpr:
    """Matrix-valued affine expression in a problem's scalar parameters."""

    __slots__ = ("owner", "shape", "const", "terms")

    # force ndarray @/+/- AffExpr to defer to the reflected ops below
    __array_ufunc__ = None

    def __init__(self, owner, shape, const=None, terms=None):
        self.owner = owner
        self.shape = tuple(shape)
        self.const = np.zeros(self.shape) if const is None else np.asarray(const, dtype=np.float64)
        if self.const.shape != self.shape:
            raise ValueError(f"const shape {self.const.shape} != {self.shape}")
        self.terms: Dict[int, np.ndarray] = {} if terms is None else terms

    # -- helpers ---------------------------------------------------------
    def _coerce(self, other) -> "AffExpr":
        if isinstance(other, AffExpr):
            if other.owner is not self.owner:
                raise ValueError("cannot mix expressions from different problems")
            return other
        arr = np.asarray(other, dtype=np.float64)
        if arr.ndim == 0:
            if self.shape != (1, 1):
                raise ValueError("scalar constant only conforms with a 1x1 expression")
            arr = arr.reshape(1, 1)
        return AffExpr(self.owner, arr.shape, const=arr)

    def copy_terms(self) -> Dict[int, np.ndarray]:
        return {k: v.copy() for k, v in self.terms.items()}

    # -- algebra ---------------------------------------------------------
    def __add__(self, other):
        o = self._coerce(other)
        if o.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} + {o.shape}")
        terms = self.copy_terms()
        for k, v in o.terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return AffExpr(self.owner, self.shape, self.const + o.const, terms)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return AffExpr(self.owner, self.shape, -self.const,
                       {k: -v for k, v in self.terms.items()})

    def __mul__(self, alpha):
        alpha = float(alpha)
        return AffExpr(self.owner, self.shape, alpha * self.const,
                       {k: alpha * v for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __matmul__(self, rhs):
        """expr @ constant"""
        rhs = np.asarray(rhs, dtype=np.float64)
        shape = (self.shape[0], rhs.shape[1])
        return AffExpr(self.owner, shape, self.const @ rhs,
                       {k: v @ rhs for k, v in self.terms.items()})

    def __rmatmul__(self, lhs):
        """constant @ expr"""
        lhs = np.asarray(lhs, dtype=np.float64)
        shape = (lhs.shape[0], self.shape[1])
        return AffExpr(self.owner, shape, lhs @ self.const,
                       {k: lhs @ v for k, v in self.terms.items()})

    @property
    def T(self) -> "AffExpr":
        return AffExpr(self.owner, (self.shape[1], self.shape[0]), self.const.T,
                       {k: v.T for k, v in self.terms.items()})

    def scale(self, mat) -> "AffExpr":
        """Multiply a constant matrix by this 1x1 (scalar) expression."""
        if self.shape != (1, 1):
            raise ValueError("scale() is only defined for scalar expressions")
        mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
        return AffExpr(self.owner, mat.shape, self.const[0, 0] * mat,
                       {k: v[0, 0] * mat for k, v in self.terms.items()})

    def trace(self) -> "AffExpr":
        if self.shape[0] != self.shape[1]:
            raise ValueError("trace of a non-square expression")
        return AffExpr(self.owner, (1, 1),
                       np.array([[np.trace(self.const)]]),
                       {k: np.array([[np.trace(v)]]) for k, v in self.terms.items()})

    # -- evaluation ------------------------------------------------------
    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        for k, v in self.terms.items():
            out += x[k] * v
        return out


@dataclass
class VarInfo:
    name: str
    kind: str  # 'sym' | 'mat' | 'scalar'
    shape: Tuple[int, int]
    offset: int
    nparams: int


@dataclass
class BlockLmi:
    """A symmetric affine matrix expression with a definiteness sense."""

    name: str
    expr: AffExpr
    sense: str

    def __post_init__(self):
        if self.sense not in _SENSES:
            raise ValueError(f"sense must be one of {_SENSES}")
        p, q = self.expr.shape
        if p != q:
            raise ValueError(f"LMI block {self.name!r} is not square: {self.expr.shape}")
        t = self.expr.T
        scale = 1.0 + np.abs(self.expr.const).max(initial=0.0)
        if not np.allclose(self.expr.const, t.const, atol=1e-10 * scale):
            raise ValueError(f"LMI block {self.name!r} has an asymmetric constant part")
        for k, v in self.expr.terms.items():
            if not np.allclose(v, t.terms[k], atol=1e-10 * (1.0 + np.abs(v).max())):
                raise ValueError(f"LMI block {self.name!r} is asymmetric in parameter {k}")

    @property
    def size(self) -> int:
        return self.expr.shape[0]


@dataclass
class CanonicalBlock:
    name: str
    size: int
    F0: np.ndarray
    terms: Dict[int, np.ndarray]


@dataclass
class CanonicalSdp:
    """Standard conic form: min c^T x s.t. F0_k + sum_i x_i Fi_k PSD."""

    c: np.ndarray
    blocks: List[CanonicalBlock]
    var_info: List[VarInfo]

    def dump(self) -> str:
        """Plain-text dump for external cross-checking."""
        lines = [f"nvars {self.c.size}",
                 "objective " + " ".join(repr(v) for v in self.c),
                 f"cones {len(self.blocks)} sizes "
                 + " ".join(str(b.size) for b in self.blocks)]
        for b in self.blocks:
            lines.append(f"block {b.name} size {b.size}")
            lines.append("F0")
            for row in b.F0:
                lines.append(" ".join(repr(v) for v in row))
            for idx in sorted(b.terms):
                lines.append(f"F x[{idx}]")
                for row in b.terms[idx]:
                    lines.append(" ".join(repr(v) for v in row))
        return "\n".join(lines) + "\n"


@dataclass
class SdpSolution:
    status: str  # 'optimal' | 'infeasible' | 'numerical-failure'
    values: Dict[str, np.ndarray]
    objective: Optional[float]
    max_violation: Optional[float]
    solver_status: str = ""
    block_margins: Dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class SdpProblem:
    """Linear objective over matrix variables subject to block LMIs."""

    def __init__(self, eps_lmi: float = DEFAULT_EPS_LMI):
        if eps_lmi <= 0:
            raise ValueError("eps_lmi must be positive")
        self.eps_lmi = float(eps_lmi)
        self.variables: List[VarInfo] = []
        self.constraints: List[BlockLmi] = []
        self._objective: Optional[AffExpr] = None
        self._nparams = 0
        self._names = set()

    # -- variable factories ----------------------------------------------
    def _register(self, name, kind, shape, nparams) -> VarInfo:
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        info = VarInfo(name, kind, shape, self._nparams, nparams)
        self.variables.append(info)
        self._names.add(name)
        self._nparams += nparams
        return info

    def sym(self, name: str, k: int) -> AffExpr:
        """Symmetric k-by-k matrix variable (upper-triangle parameters)."""
        info = self._register(name, "sym", (k, k), k * (k + 1) // 2)
        terms = {}
        p = info.offset
        for i in range(k):
            for j in range(i, k):
                coeff = np.zeros((k, k))
                coeff[i, j] = 1.0
                coeff[j, i] = 1.0
                terms[p] = coeff
                p += 1
        return AffExpr(self, (k, k), terms=terms)

    def mat(self, name: str, p: int, q: int) -> AffExpr:
        info = self._register(name, "mat", (p, q), p * q)
        terms = {}
        idx = info.offset
        for i in range(p):
            for j in range(q):
                coeff = np.zeros((p, q))
                coeff[i, j] = 1.0
                terms[idx] = coeff
                idx += 1
        return AffExpr(self, (p, q), terms=terms)

    def scalar(self, name: str) -> AffExpr:
        info = self._register(name, "scalar", (1, 1), 1)
        return AffExpr(self, (1, 1), terms={info.offset: np.array([[1.0]])})

    def constant(self, arr) -> AffExpr:
        arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
        return AffExpr(self, arr.shape, const=arr)

    # -- block assembly ----------------------------------------------------
    def block(self, grid: Sequence[Sequence]) -> AffExpr:
        """Assemble a block matrix; None entries mirror their transpose.

        Entries may be AffExpr, arrays, or scalars (1x1). A None at
        (i, j) is filled with the transpose of entry (j, i); a None on
        the diagonal becomes a zero block.
        """
        nrows = len(grid)
        ncols = len(grid[0])
        cells: List[List[Optional[AffExpr]]] = [[None] * ncols for _ in range(nrows)]
        for i in range(nrows):
            if len(grid[i]) != ncols:
                raise ValueError("ragged block grid")
            for j in range(ncols):
                e = grid[i][j]
                if e is None:
                    continue
                if not isinstance(e, AffExpr):
                    arr = np.atleast_2d(np.asarray(e, dtype=np.float64))
                    e = AffExpr(self, arr.shape, const=arr)
                elif e.owner is not self:
                    raise ValueError("expression belongs to a different problem")
                cells[i][j] = e
        for i in range(nrows):
            for j in range(ncols):
                if cells[i][j] is None and j < nrows and i < ncols and cells[j][i] is not None:
                    cells[i][j] = cells[j][i].T
        heights = [None] * nrows
        widths = [None] * ncols
        for i in range(nrows):
            for j in range(ncols):
                if cells[i][j] is not None:
                    h, w = cells[i][j].shape
                    if heights[i] is None:
                        heights[i] = h
                    elif heights[i] != h:
                        raise ValueError(f"row {i} height conflict")
                    if widths[j] is None:
                        widths[j] = w
                    elif widths[j] != w:
                        raise ValueError(f"column {j} width conflict")
        if any(h is None for h in heights) or any(w is None for w in widths):
            raise ValueError("cannot infer a block size: an entire row/column is None")
        total = (sum(heights), sum(widths))
        const = np.zeros(total)
        terms: Dict[int, np.ndarray] = {}
        r0 = 0
        for i in range(nrows):
            c0 = 0
            for j in range(ncols):
                cell = cells[i][j]
                if cell is not None:
                    if cell.shape != (heights[i], widths[j]):
                        raise ValueError(f"block ({i},{j}) has shape {cell.shape}, "
                                         f"expected {(heights[i], widths[j])}")
                    const[r0:r0 + heights[i], c0:c0 + widths[j]] = cell.const
                    for k, v in cell.terms.items():
                        tgt = terms.setdefault(k, np.zeros(total))
                        tgt[r0:r0 + heights[i], c0:c0 + widths[j]] += v
                c0 += widths[j]
            r0 += heights[i]
        return AffExpr(self, total, const=const, terms=terms)

    def add_lmi(self, name: str, expr, sense: str) -> BlockLmi:
        if isinstance(expr, (list, tuple)):
            expr = self.block(expr)
        if not isinstance(expr, AffExpr):
            expr = self.constant(expr)
        if expr.owner is not self:
            raise ValueError("expression belongs to a different problem")
        for k in expr.terms:
            if k >= self._nparams:
                raise ValueError(f"LMI {name!r} references an undeclared parameter")
        lmi = BlockLmi(name=name, expr=expr, sense=sense)
        self.constraints.append(lmi)
        return lmi

    def minimize(self, expr: AffExpr) -> None:
        if expr.shape != (1, 1):
            raise ValueError("objective must be a scalar expression")
        if expr.owner is not self:
            raise ValueError("objective belongs to a different problem")
        self._objective = expr

    # -- canonical form ----------------------------------------------------
    def canonicalize(self) -> CanonicalSdp:
        """Normalize all constraints to 'PSD' sense in standard conic form."""
        if self._objective is None:
            raise ValueError("no objective set")
        c = np.zeros(self._nparams)
        for k, v in self._objective.terms.items():
            c[k] += v[0, 0]
        blocks = []
        for lmi in self.constraints:
            e = lmi.expr
            F0 = e.const.copy()
            terms = e.copy_terms()
            if lmi.sense in ("<=0", "<0"):
                F0 = -F0
                terms = {k: -v for k, v in terms.items()}
            if lmi.sense in (">0", "<0"):
                F0 = F0 - self.eps_lmi * np.eye(e.shape[0])
            blocks.append(CanonicalBlock(name=lmi.name, size=e.shape[0],
                                         F0=F0, terms=terms))
        return CanonicalSdp(c=c, blocks=blocks, var_info=list(self.variables))

    # -- solution handling ---------------------------------------------------
    def extract_values(self, x: np.ndarray) -> Dict[str, np.ndarray]:
        out = {}
        for v in self.variables:
            p = x[v.offset:v.offset + v.nparams]
            if v.kind == "scalar":
                out[v.name] = float(p[0])
            elif v.kind == "mat":
                out[v.name] = p.reshape(v.shape)
            else:
                k = v.shape[0]
                m = np.zeros((k, k))
                idx = 0
                for i in range(k):
                    for j in range(i, k):
                        m[i, j] = p[idx]
                        m[j, i] = p[idx]
                        idx += 1
                out[v.name] = m
        return out

    def check_feasibility(self, x: np.ndarray,
                          feas_tol: float = DEFAULT_FEAS_TOL):
        """Eigendecompose every original LMI at x; return margins.

        The margin of a block is its smallest eigenvalue after sense
        normalization (so nonnegative means feasible); the reported
        violation scales each block by 1 + its spectral norm to avoid
        false rejections on badly scaled data.
        """
        margins = {}
        worst_rel = 0.0
        for lmi in self.constraints:
            val = lmi.expr.value(x)
            if lmi.sense in ("<=0", "<0"):
                val = -val
            eigs = np.linalg.eigvalsh((val + val.T) / 2.0)
            margin = float(eigs.min())
            margins[lmi.name] = margin
            scale = 1.0 + float(np.abs(eigs).max())
            worst_rel = max(worst_rel, max(0.0, -margin) / scale)
        feasible = worst_rel <= feas_tol
        return feasible, worst_rel, margins

    def solve(self, backend: str = "cvxopt", feas_tol: float = DEFAULT_FEAS_TOL,
              reltol: float = 1e-8, maxiters: int = 200) -> SdpSolution:
        """Canonicalize and solve; re-verify feasibility independently.

        A solver-reported optimum is downgraded to numerical-failure if
        the substituted blocks fail the eigenvalue re-check; an
        'unknown' interior-point exit is upgraded to optimal only when
        the iterate passes the re-check and closed the duality gap.
        """
        if backend != "cvxopt":
            raise SolverUnavailable(f"unknown solver backend {backend!r}")
        cf = self.canonicalize()
        # the interior point can crash when pushed past its precision
        # floor; retry on a fixed ladder of looser gap targets (the
        # eigenvalue re-check below still gates acceptance)
        ladder = [reltol] + [t for t in (1e-7, 1e-6) if t > reltol]
        x, raw_status, gap = None, "not attempted", None
        for rt in ladder:
            x_t, raw_t, gap_t = _solve_cvxopt(cf, reltol=rt, maxiters=maxiters)
            if raw_t == "unbounded-free-direction":
                return SdpSolution(status="numerical-failure", values={},
                                   objective=None, max_violation=None,
                                   solver_status="unbounded: objective decreases "
                                                 "along an unconstrained direction")
            if raw_t == "primal infeasible":
                return SdpSolution(status="infeasible", values={}, objective=None,
                                   max_violation=None, solver_status=raw_t)
            if raw_t == "optimal" and x_t is not None:
                x, raw_status, gap = x_t, raw_t, gap_t
                break
            if x_t is not None and x is None:
                x, raw_status, gap = x_t, raw_t, gap_t
        if x is None:
            return SdpSolution(status="numerical-failure", values={}, objective=None,
                               max_violation=None, solver_status=raw_status)
        feasible, worst_rel, margins = self.check_feasibility(x, feas_tol)
        objective = float(cf.c @ x)
        if raw_status == "optimal":
            status = "optimal" if feasible else "numerical-failure"
        elif feasible and gap is not None and gap <= 1e-6:
            status = "optimal"  # good iterate despite a shy solver exit
        else:
            status = "numerical-failure"
        return SdpSolution(status=status, values=self.extract_values(x),
                           objective=objective, max_violation=worst_rel,
                           solver_status=raw_status, block_margins=margins)


def _solve_cvxopt(cf: CanonicalSdp, reltol: float, maxiters: int):
    """Adapter to the cvxopt conic interior-point solver.

    Degenerate problems (interpolating data, empty factors) leave whole
    directions of the parameter space outside every constraint; the
    backend rejects such rank-deficient data, so the solve is restricted
    to the row space of the stacked coefficient matrix and the
    minimum-norm representative is returned. If the objective decreases
    along a free direction the problem is unbounded.
    """
    try:
        from cvxopt import matrix, solvers
    except ImportError as exc:  # pragma: no cover - environment-dependent
        raise SolverUnavailable("cvxopt is not installed") from exc

    nvars = cf.c.size
    G_blocks = []
    for b in cf.blocks:
        G = np.zeros((b.size * b.size, nvars))
        for idx, Fi in b.terms.items():
            G[:, idx] = (-Fi).ravel(order="F")
        G_blocks.append(G)
    stacked = np.vstack(G_blocks) if G_blocks else np.zeros((0, nvars))
    _, svals, vt = np.linalg.svd(stacked, full_matrices=True)
    tol = (svals.max() if svals.size else 0.0) * 1e-12
    rank = int(np.sum(svals > tol))
    if rank < nvars:
        V = vt[:rank].T  # (nvars, rank) row-space basis
        c_null = cf.c - V @ (V.T @ cf.c)
        if np.linalg.norm(c_null) > 1e-12 * (1.0 + np.linalg.norm(cf.c)):
            return None, "unbounded-free-direction", None
    else:
        V = None

    Gs = [matrix(G if V is None else G @ V) for G in G_blocks]
    hs = [matrix(b.F0) for b in cf.blocks]
    c_red = cf.c if V is None else V.T @ cf.c
    with _solver_lock:
        old = dict(solvers.options)
        solvers.options.clear()
        solvers.options.update({
            "show_progress": False,
            "maxiters": maxiters,
            "abstol": reltol,
            "reltol": reltol,
            "feastol": max(reltol, 1e-9),
        })
        try:
            sol = solvers.sdp(matrix(c_red), Gs=Gs, hs=hs)
        except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
            return None, f"solver error: {exc}", None
        finally:
            solvers.options.clear()
            solvers.options.update(old)
    if sol["x"] is None:
        return None, sol["status"], None
    y = np.asarray(sol["x"]).ravel()
    x = y.copy() if V is None else V @ y
    gap = sol.get("relative gap")
    gap = None if gap is None else float(gap)
    return x, sol["status"], gap
