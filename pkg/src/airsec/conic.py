"""Real-valued conic programs (linear objective, affine equalities, nonnegative
and PSD cone blocks) and a primal-dual interior-point solve backend.

Problem form
------------
    minimize    c' v
    subject to  A_eq v = b_eq
                v[block] in K_block   for every cone block

The variable vector ``v`` is partitioned: indices covered by a cone block are
slack coordinates (nonnegative scalars, or the scaled upper-triangle
vectorization of a PSD matrix); everything else is free.  PSD slices use
symmetric vectorization with sqrt(2)-scaled off-diagonals so Euclidean inner
products of slices equal Frobenius inner products of the matrices.

Complex Hermitian matrix constraints enter through :func:`embed_hermitian`,
which maps an n x n Hermitian matrix to a real symmetric 2n x 2n matrix with
the same definiteness (each eigenvalue doubled).

The default backend maps the problem onto cvxopt's cone LP solver (a
Nesterov-Todd scaled, Mehrotra predictor-corrector path-following method).
Slack coordinates whose defining equality row is recognised are eliminated
first, so the interior-point iteration runs over the free variables only.
The backend is a seam: ``solve`` dispatches through ``_BACKENDS``.
"""

from __future__ import annotations

import io
import json
import re
from contextlib import redirect_stdout
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ConeBlock",
    "ConicProblem",
    "ConicSolution",
    "ProblemBuilder",
    "OPTIMAL",
    "PRIMAL_INFEASIBLE",
    "DUAL_INFEASIBLE",
    "MAX_ITERATIONS",
    "NUMERICAL_FAILURE",
    "svec",
    "smat",
    "svec_len",
    "embed_hermitian",
    "herm_len",
    "herm_pack",
    "herm_unpack",
    "herm_trace_row",
    "hermitian_embed_svec_map",
    "herm_coord_basis",
    "hermitian_var_psd_ties",
    "stack_complex",
    "congruence_tensor",
    "solve",
    "certify_solution",
]

OPTIMAL = "Optimal"
PRIMAL_INFEASIBLE = "PrimalInfeasible"
DUAL_INFEASIBLE = "DualInfeasible"
MAX_ITERATIONS = "MaxIterations"
NUMERICAL_FAILURE = "NumericalFailure"

_SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# symmetric vectorization and Hermitian helpers
# ---------------------------------------------------------------------------

def svec_len(n: int) -> int:
    """Length of the symmetric vectorization of an n x n matrix."""
    return n * (n + 1) // 2


def _svec_indices(n: int):
    """Row/col index arrays of the upper triangle in svec order (row-major)."""
    rows, cols = np.triu_indices(n)
    return rows, cols


def svec(m: np.ndarray) -> np.ndarray:
    """Symmetric vectorization: diagonal entries as-is, off-diagonals * sqrt(2)."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError("svec expects a square matrix")
    r, c = _svec_indices(n)
    out = m[r, c].copy()
    out[r != c] *= _SQRT2
    return out


def smat(v: np.ndarray, n: int | None = None) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    if n is None:
        n = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if svec_len(n) != v.size:
        raise ValueError("svec length does not match matrix side")
    m = np.zeros((n, n))
    r, c = _svec_indices(n)
    vals = v.copy()
    vals[r != c] /= _SQRT2
    m[r, c] = vals
    m[c, r] = vals
    return m


def embed_hermitian(h: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Real symmetric embedding [[Re h, -Im h], [Im h, Re h]] of a Hermitian h.

    The embedding is PSD iff h is PSD; every eigenvalue of h appears twice.
    Raises ValueError when h deviates from Hermitian by more than ``tol``
    (relative to its largest entry).
    """
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    if h.shape != (n, n):
        raise ValueError("embed_hermitian expects a square matrix")
    scale = max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
    if np.max(np.abs(h - h.conj().T)) > tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    a, b = h.real, h.imag
    return np.block([[a, -b], [b, a]])


def herm_len(n: int) -> int:
    """Number of real coordinates of an n x n Hermitian matrix."""
    return n * n


def _herm_offdiag_indices(n: int):
    rows, cols = np.triu_indices(n, k=1)
    return rows, cols


def herm_pack(x: np.ndarray) -> np.ndarray:
    """Real coordinates of a Hermitian matrix: diag, then (Re, Im) per i<j pair."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    r, c = _herm_offdiag_indices(n)
    out = np.empty(n * n)
    out[:n] = x.diagonal().real
    out[n::2] = x[r, c].real
    out[n + 1 :: 2] = x[r, c].imag
    return out


def herm_unpack(coords: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`herm_pack`."""
    coords = np.asarray(coords, dtype=float)
    if coords.size != n * n:
        raise ValueError("coordinate length mismatch")
    x = np.zeros((n, n), dtype=complex)
    np.fill_diagonal(x, coords[:n])
    r, c = _herm_offdiag_indices(n)
    vals = coords[n::2] + 1j * coords[n + 1 :: 2]
    x[r, c] = vals
    x[c, r] = vals.conj()
    return x


def herm_trace_row(coeff: np.ndarray) -> np.ndarray:
    """Row vector t with t . herm_pack(X) = Tr(coeff @ X) for Hermitian coeff, X."""
    coeff = np.asarray(coeff, dtype=complex)
    n = coeff.shape[0]
    r, c = _herm_offdiag_indices(n)
    row = np.empty(n * n)
    row[:n] = coeff.diagonal().real
    # Tr(C X) = sum_i C_ii X_ii + sum_{i<j} 2(Re C_ij Re X_ij + Im C_ij Im X_ij)
    row[n::2] = 2.0 * coeff[r, c].real
    row[n + 1 :: 2] = 2.0 * coeff[r, c].imag
    return row


# ---------------------------------------------------------------------------
# problem containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeBlock:
    """One cone block over a contiguous slice of the variable vector.

    kind: "nonneg" (length scalars >= 0) or "psd" (svec of a side x side
    real symmetric PSD matrix, length = side(side+1)/2).
    """

    kind: str
    offset: int
    length: int
    side: int = 0

    def __post_init__(self):
        if self.kind not in ("nonneg", "psd"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.kind == "psd" and self.length != svec_len(self.side):
            raise ValueError("psd block length must be side(side+1)/2")


@dataclass
class ConicProblem:
    """Standard-form conic program over a stacked real variable vector."""

    c: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    cones: list[ConeBlock]
    variable_map: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def n_var(self) -> int:
        return self.c.size

    def cone_index_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_var, dtype=bool)
        for blk in self.cones:
            mask[blk.offset : blk.offset + blk.length] = True
        return mask

    def validate(self) -> None:
        """Check block coverage (each index in at most one cone) and shapes."""
        if self.a_eq.shape != (self.b_eq.size, self.n_var):
            raise ValueError("equality system shape mismatch")
        seen = np.zeros(self.n_var, dtype=int)
        for blk in self.cones:
            if blk.offset < 0 or blk.offset + blk.length > self.n_var:
                raise ValueError("cone block out of range")
            seen[blk.offset : blk.offset + blk.length] += 1
        if np.any(seen > 1):
            raise ValueError("cone blocks overlap")

    # ---- debug dump -------------------------------------------------------
    def to_json(self) -> str:
        """Serialize to the documented JSON debug schema."""
        coo = self.a_eq.tocoo()
        doc = {
            "objective": self.c.tolist(),
            "equalities": {
                "shape": [int(s) for s in self.a_eq.shape],
                "rows": coo.row.tolist(),
                "cols": coo.col.tolist(),
                "vals": coo.data.tolist(),
                "rhs": self.b_eq.tolist(),
            },
            "cones": [
                {"kind": b.kind, "offset": b.offset, "length": b.length, "side": b.side}
                for b in self.cones
            ],
            "variable_map": {k: [int(o), int(l)] for k, (o, l) in self.variable_map.items()},
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "ConicProblem":
        doc = json.loads(text)
        eq = doc["equalities"]
        a = sp.coo_matrix(
            (eq["vals"], (eq["rows"], eq["cols"])), shape=tuple(eq["shape"])
        ).tocsr()
        cones = [ConeBlock(d["kind"], d["offset"], d["length"], d["side"]) for d in doc["cones"]]
        vm = {k: (int(v[0]), int(v[1])) for k, v in doc.get("variable_map", {}).items()}
        return cls(
            c=np.asarray(doc["objective"], dtype=float),
            a_eq=a,
            b_eq=np.asarray(eq["rhs"], dtype=float),
            cones=cones,
            variable_map=vm,
        )


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray | None
    objective_value: float | None
    residuals: dict
    iterations: int = 0
    trace: list = field(default_factory=list)


class ProblemBuilder:
    """Incremental assembly of a :class:`ConicProblem`.

    Free blocks and cone slacks are appended onto one variable vector;
    equality rows accumulate in COO triplets.
    """

    def __init__(self):
        self._n = 0
        self._cones: list[ConeBlock] = []
        self._vm: dict[str, tuple[int, int]] = {}
        self._obj: list[tuple[int, float]] = []
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._rhs: list[float] = []
        self._m = 0

    # ---- variables --------------------------------------------------------
    def add_free_block(self, name: str, length: int) -> int:
        off = self._n
        self._n += length
        self._vm[name] = (off, length)
        return off

    def add_nonneg_block(self, length: int, name: str | None = None) -> int:
        off = self._n
        self._n += length
        self._cones.append(ConeBlock("nonneg", off, length))
        if name:
            self._vm[name] = (off, length)
        return off

    def add_psd_block(self, side: int, name: str | None = None) -> int:
        off = self._n
        length = svec_len(side)
        self._n += length
        self._cones.append(ConeBlock("psd", off, length, side))
        if name:
            self._vm[name] = (off, length)
        return off

    # ---- rows and objective ------------------------------------------------
    def add_eq_row(self, cols, vals, rhs: float) -> int:
        cols = np.atleast_1d(np.asarray(cols, dtype=int))
        vals = np.atleast_1d(np.asarray(vals, dtype=float))
        self._rows.append(np.full(cols.size, self._m))
        self._cols.append(cols)
        self._vals.append(vals)
        self._rhs.append(float(rhs))
        self._m += 1
        return self._m - 1

    def add_eq_rows(self, rows, cols, vals, rhs) -> int:
        """Bulk append: `rows` are local (0-based within this batch)."""
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        vals = np.asarray(vals, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        first = self._m
        self._rows.append(rows + first)
        self._cols.append(cols)
        self._vals.append(vals)
        self._rhs.extend(rhs.tolist())
        self._m += rhs.size
        return first

    def add_objective(self, cols, vals) -> None:
        cols = np.atleast_1d(np.asarray(cols, dtype=int))
        vals = np.atleast_1d(np.asarray(vals, dtype=float))
        for c_, v_ in zip(cols, vals):
            self._obj.append((int(c_), float(v_)))

    def finalize(self) -> ConicProblem:
        c = np.zeros(self._n)
        for col, val in self._obj:
            c[col] += val
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = cols = vals = np.zeros(0)
        a = sp.coo_matrix((vals, (rows, cols)), shape=(self._m, self._n)).tocsr()
        prob = ConicProblem(
            c=c,
            a_eq=a,
            b_eq=np.asarray(self._rhs, dtype=float),
            cones=list(self._cones),
            variable_map=dict(self._vm),
        )
        prob.validate()
        return prob


# ---------------------------------------------------------------------------
# maps between Hermitian coordinates and embedded svec coordinates
# ---------------------------------------------------------------------------

_EMBED_SVEC_CACHE: dict[int, sp.csr_matrix] = {}
_HERM_BASIS_CACHE: dict[int, sp.csr_matrix] = {}


def hermitian_embed_svec_map(n: int) -> sp.csr_matrix:
    """Sparse map taking [Re(C).ravel(), Im(C).ravel()] of a Hermitian n x n
    matrix C to svec(embed_hermitian(C))."""
    if n in _EMBED_SVEC_CACHE:
        return _EMBED_SVEC_CACHE[n]
    rows, cols, vals = [], [], []
    r_idx, c_idx = _svec_indices(2 * n)
    for k, (r, c) in enumerate(zip(r_idx, c_idx)):
        scale = 1.0 if r == c else _SQRT2
        if c < n:  # top-left block: Re C[r, c]
            rows.append(k)
            cols.append(r * n + c)
            vals.append(scale)
        elif r < n <= c:  # top-right block: -Im C[r, c - n]
            rows.append(k)
            cols.append(n * n + r * n + (c - n))
            vals.append(-scale)
        else:  # bottom-right block: Re C[r - n, c - n]
            rows.append(k)
            cols.append((r - n) * n + (c - n))
            vals.append(scale)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(svec_len(2 * n), 2 * n * n)).tocsr()
    _EMBED_SVEC_CACHE[n] = m
    return m


def herm_coord_basis(n: int) -> sp.csr_matrix:
    """Sparse map from herm_pack coordinates to [Re(X).ravel(), Im(X).ravel()]."""
    if n in _HERM_BASIS_CACHE:
        return _HERM_BASIS_CACHE[n]
    rows, cols, vals = [], [], []
    for i in range(n):  # diagonal coordinates
        rows.append(i * n + i)
        cols.append(i)
        vals.append(1.0)
    k = n
    r_off, c_off = _herm_offdiag_indices(n)
    for i, j in zip(r_off, c_off):
        rows.extend([i * n + j, j * n + i])            # Re at (i,j) and (j,i)
        cols.extend([k, k])
        vals.extend([1.0, 1.0])
        rows.extend([n * n + i * n + j, n * n + j * n + i])  # Im: +(i,j), -(j,i)
        cols.extend([k + 1, k + 1])
        vals.extend([1.0, -1.0])
        k += 2
    m = sp.coo_matrix((vals, (rows, cols)), shape=(2 * n * n, n * n)).tocsr()
    _HERM_BASIS_CACHE[n] = m
    return m


def hermitian_var_psd_ties(n: int) -> sp.csr_matrix:
    """Tie matrix D with svec(embed(X)) = D @ herm_pack(X)."""
    return (hermitian_embed_svec_map(n) @ herm_coord_basis(n)).tocsr()


def stack_complex(tensor: np.ndarray) -> np.ndarray:
    """Stack a complex (n, n, p) coefficient tensor as (2 n^2, p) reals."""
    n = tensor.shape[0]
    p = tensor.shape[2]
    return np.vstack([tensor.real.reshape(n * n, p), tensor.imag.reshape(n * n, p)])


def congruence_tensor(f: np.ndarray) -> np.ndarray:
    """Coefficient tensor of X -> F X F^H over herm_pack coordinates of X.

    Returns T with T[:, :, c] = F B_c F^H for the Hermitian basis matrix B_c
    of coordinate c."""
    m, n = f.shape
    pair = np.einsum("ri,cj->rcij", f, f.conj())
    tensor = np.empty((m, m, n * n), dtype=complex)
    tensor[:, :, :n] = pair[:, :, np.arange(n), np.arange(n)]
    k = n
    r_off, c_off = _herm_offdiag_indices(n)
    for i, j in zip(r_off, c_off):
        tensor[:, :, k] = pair[:, :, i, j] + pair[:, :, j, i]
        tensor[:, :, k + 1] = 1j * pair[:, :, i, j] - 1j * pair[:, :, j, i]
        k += 2
    return tensor


# ---------------------------------------------------------------------------
# svec <-> full-matrix expansion (for the cvxopt backend)
# ---------------------------------------------------------------------------

_EXPAND_CACHE: dict[int, sp.csr_matrix] = {}


def _expand_matrix(side: int) -> sp.csr_matrix:
    """Sparse map from svec coordinates to the column-major full matrix."""
    if side in _EXPAND_CACHE:
        return _EXPAND_CACHE[side]
    r, c = _svec_indices(side)
    rows = []
    cols = []
    vals = []
    for k, (i, j) in enumerate(zip(r, c)):
        if i == j:
            rows.append(i + j * side)
            cols.append(k)
            vals.append(1.0)
        else:
            # full (i,j) and (j,i) both carry svec value / sqrt(2)
            rows.extend([i + j * side, j + i * side])
            cols.extend([k, k])
            vals.extend([1.0 / _SQRT2, 1.0 / _SQRT2])
    m = sp.coo_matrix((vals, (rows, cols)), shape=(side * side, svec_len(side))).tocsr()
    _EXPAND_CACHE[side] = m
    return m


# ---------------------------------------------------------------------------
# cvxopt backend
# ---------------------------------------------------------------------------

_TRACE_RE = re.compile(
    r"^\s*(\d+):\s+([-\d.eE+]+)\s+([-\d.eE+]+)\s+([-\d.eE+]+)\s+([-\d.eE+]+)\s+([-\d.eE+]+)"
)


def _parse_trace(text: str) -> list[dict]:
    out = []
    for line in text.splitlines():
        m = _TRACE_RE.match(line)
        if m:
            out.append(
                {
                    "iteration": int(m.group(1)),
                    "pcost": float(m.group(2)),
                    "dcost": float(m.group(3)),
                    "gap": float(m.group(4)),
                    "pres": float(m.group(5)),
                    "dres": float(m.group(6)),
                }
            )
    return out


def _eliminate_slacks(p: ConicProblem):
    """Split the equality system into slack definitions and residual rows.

    Returns (x_cols, expr, const, residual_a, residual_b, kept_blocks) where
    for each cone block either all slack entries are affine in the kept
    variables (expr rows, eliminated) or the whole block is kept as explicit
    variables.  A row qualifies as the definition of slack s when it touches
    exactly one cone coordinate; the row then reads  a'x + kappa*s = b.
    """
    n = p.n_var
    a = p.a_eq.tocsr()
    m = a.shape[0]
    cone_mask = p.cone_index_mask()
    cone_cols = np.flatnonzero(cone_mask)
    col_to_block = np.full(n, -1)
    for bi, blk in enumerate(p.cones):
        col_to_block[blk.offset : blk.offset + blk.length] = bi

    # count cone coordinates per row
    a_cone = a[:, cone_cols].tocsr()
    counts = np.diff(a_cone.indptr)
    def_row_for = np.full(n, -1)  # cone col -> defining row
    row_defines = np.full(m, -1)  # row -> cone col it defines
    single = np.flatnonzero(counts == 1)
    for r_ in single:
        local = a_cone.indices[a_cone.indptr[r_]]
        col = cone_cols[local]
        if def_row_for[col] == -1:
            def_row_for[col] = r_
            row_defines[r_] = col

    # blocks fully covered by definitions are eliminated
    eliminated = np.zeros(len(p.cones), dtype=bool)
    for bi, blk in enumerate(p.cones):
        sl = def_row_for[blk.offset : blk.offset + blk.length]
        eliminated[bi] = bool(np.all(sl >= 0))
    # drop definitions that belong to kept blocks
    for bi, blk in enumerate(p.cones):
        if not eliminated[bi]:
            for col in range(blk.offset, blk.offset + blk.length):
                r_ = def_row_for[col]
                if r_ >= 0:
                    row_defines[r_] = -1
                    def_row_for[col] = -1

    elim_cols = np.flatnonzero(def_row_for >= 0)
    kept_mask = ~cone_mask.copy()
    for bi, blk in enumerate(p.cones):
        if not eliminated[bi]:
            kept_mask[blk.offset : blk.offset + blk.length] = True
    x_cols = np.flatnonzero(kept_mask)

    # expression for eliminated slacks: s = expr @ x + const
    n_x = x_cols.size
    if elim_cols.size:
        rows_def = def_row_for[elim_cols]
        a_def = a[rows_def, :]
        kappa = np.asarray(a_def[np.arange(elim_cols.size), elim_cols]).ravel()
        a_def = a_def.tolil()
        a_def[np.arange(elim_cols.size), elim_cols] = 0.0
        a_def = a_def.tocsr()
        if np.any(np.abs(a_def[:, elim_cols]).sum(axis=1) > 0):
            # definition rows may not reference other eliminated slacks
            raise ValueError("unsupported slack coupling in equality system")
        inv_kappa = 1.0 / kappa
        expr = -sp.diags(inv_kappa) @ a_def[:, x_cols]
        const = inv_kappa * p.b_eq[rows_def]
    else:
        expr = sp.csr_matrix((0, n_x))
        const = np.zeros(0)
    col_pos_in_elim = np.full(n, -1)
    col_pos_in_elim[elim_cols] = np.arange(elim_cols.size)

    # residual rows: substitute eliminated slacks
    residual_rows = np.flatnonzero(row_defines < 0)
    if residual_rows.size:
        a_res = a[residual_rows, :]
        a_res_x = a_res[:, x_cols]
        a_res_s = a_res[:, elim_cols]
        res_a = (a_res_x + a_res_s @ expr).tocsr()
        res_b = p.b_eq[residual_rows] - np.asarray(a_res_s @ const).ravel()
        res_a, res_b, consistent = _reduce_equalities(res_a, res_b)
    else:
        res_a = sp.csr_matrix((0, n_x))
        res_b = np.zeros(0)
        consistent = True

    return x_cols, expr, const, res_a, res_b, eliminated, col_pos_in_elim, consistent


def _reduce_equalities(res_a: sp.csr_matrix, res_b: np.ndarray):
    """Drop linearly dependent residual equality rows (the cone LP backend
    requires a full-row-rank equality system).  Returns a reduced system plus
    a consistency flag: False when the dropped rows contradict the kept ones,
    i.e. the equalities are infeasible on their own."""
    import scipy.linalg as sla

    dense = res_a.toarray()
    m = dense.shape[0]
    if m == 0:
        return res_a, res_b, True
    _, r, piv = sla.qr(dense.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r)) if r.size else np.zeros(0)
    tol = max(dense.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > max(tol, 1e-13)))
    keep = np.sort(piv[:rank])
    kept_a = dense[keep]
    kept_b = res_b[keep]
    # consistency of dropped rows with the kept subsystem
    consistent = True
    if rank < m:
        sol, *_ = np.linalg.lstsq(dense, res_b, rcond=None)
        resid = dense @ sol - res_b
        scale = 1.0 + np.max(np.abs(res_b))
        consistent = bool(np.max(np.abs(resid)) <= 1e-9 * scale)
    return sp.csr_matrix(kept_a), kept_b, consistent


@dataclass
class CompiledConicProblem:
    """Cone-LP data with slack definitions eliminated; the objective can be
    swapped between solves, so anchor-dependent reweighting re-uses one
    compilation."""

    problem: ConicProblem
    x_cols: np.ndarray
    expr: sp.csr_matrix
    const: np.ndarray
    g_full: np.ndarray
    h_full: np.ndarray
    dims: dict
    res_a: np.ndarray | None
    res_b: np.ndarray | None
    consistent: bool


def compile_problem(p: ConicProblem) -> CompiledConicProblem:
    """Eliminate defined slacks and assemble the cone-LP matrices once."""
    (
        x_cols,
        expr,
        const,
        res_a,
        res_b,
        eliminated,
        col_pos,
        consistent,
    ) = _eliminate_slacks(p)
    n = p.n_var
    n_x = x_cols.size
    pos_in_x = np.full(n, -1)
    pos_in_x[x_cols] = np.arange(n_x)

    g_parts = []
    h_parts = []
    nonneg_total = 0
    for blk in (b for b in p.cones if b.kind == "nonneg"):
        bi = p.cones.index(blk)
        sl = np.arange(blk.offset, blk.offset + blk.length)
        if eliminated[bi]:
            rows = expr[col_pos[sl], :]
            g_parts.append(-rows)
            h_parts.append(const[col_pos[sl]])
        else:
            ident = sp.coo_matrix(
                (np.ones(blk.length), (np.arange(blk.length), pos_in_x[sl])),
                shape=(blk.length, n_x),
            )
            g_parts.append(-ident.tocsr())
            h_parts.append(np.zeros(blk.length))
        nonneg_total += blk.length
    psd_sides = []
    for blk in (b for b in p.cones if b.kind == "psd"):
        bi = p.cones.index(blk)
        sl = np.arange(blk.offset, blk.offset + blk.length)
        expand = _expand_matrix(blk.side)
        if eliminated[bi]:
            rows = expand @ expr[col_pos[sl], :]
            g_parts.append(-rows)
            h_parts.append(expand @ const[col_pos[sl]])
        else:
            ident = sp.coo_matrix(
                (np.ones(blk.length), (np.arange(blk.length), pos_in_x[sl])),
                shape=(blk.length, n_x),
            )
            g_parts.append(-(expand @ ident.tocsr()))
            h_parts.append(np.zeros(blk.side * blk.side))
        psd_sides.append(blk.side)

    if not g_parts:  # no cones: vacuous nonneg row 0'x + s = 1
        g_parts.append(sp.csr_matrix((1, n_x)))
        h_parts.append(np.ones(1))
        nonneg_total = 1

    return CompiledConicProblem(
        problem=p,
        x_cols=x_cols,
        expr=expr.tocsr(),
        const=const,
        g_full=sp.vstack(g_parts).toarray(),
        h_full=np.concatenate(h_parts),
        dims={"l": nonneg_total, "q": [], "s": psd_sides},
        res_a=res_a.toarray() if res_b.size else None,
        res_b=res_b if res_b.size else None,
        consistent=consistent,
    )


def solve_compiled(comp: CompiledConicProblem, tol: float = 1e-7,
                   max_iter: int = 100,
                   objective: np.ndarray | None = None) -> ConicSolution:
    """Solve a compiled problem, optionally overriding the objective vector
    (full-length, over all variables including slacks)."""
    from cvxopt import matrix, solvers

    if not comp.consistent:
        return ConicSolution(
            status=PRIMAL_INFEASIBLE,
            x=None,
            objective_value=None,
            residuals={"note": "inconsistent equality system"},
        )
    p = comp.problem
    n = p.n_var
    c_all = p.c if objective is None else np.asarray(objective, dtype=float)
    x_cols = comp.x_cols
    c_x = c_all[x_cols].copy()
    # expr rows follow the ascending eliminated-column order from compile
    if comp.expr.shape[0]:
        c_elim = c_all[_elim_order(p, x_cols)]
        c_x += np.asarray(comp.expr.T @ c_elim).ravel()

    kwargs = {}
    if comp.res_b is not None:
        kwargs["A"] = matrix(comp.res_a)
        kwargs["b"] = matrix(comp.res_b)
    options = {
        "show_progress": True,
        "maxiters": int(max_iter),
        "abstol": tol,
        "reltol": tol,
        "feastol": tol,
    }
    buf = io.StringIO()
    try:
        with redirect_stdout(buf):
            sol = solvers.conelp(
                matrix(c_x), matrix(comp.g_full), matrix(comp.h_full),
                comp.dims, options=options, **kwargs,
            )
    except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
        return ConicSolution(
            status=NUMERICAL_FAILURE,
            x=None,
            objective_value=None,
            residuals={"error": str(exc)},
            iterations=0,
            trace=_parse_trace(buf.getvalue()),
        )
    trace = _parse_trace(buf.getvalue())
    status_map = {
        "optimal": OPTIMAL,
        "primal infeasible": PRIMAL_INFEASIBLE,
        "dual infeasible": DUAL_INFEASIBLE,
    }
    raw = sol["status"]
    iters = int(sol.get("iterations", len(trace)))
    if raw in status_map:
        status = status_map[raw]
    elif iters >= max_iter:
        status = MAX_ITERATIONS
    else:
        status = NUMERICAL_FAILURE

    x_full = None
    obj = None
    if sol["x"] is not None and raw == "optimal":
        x_part = np.asarray(sol["x"]).ravel()
        x_full = np.zeros(n)
        x_full[x_cols] = x_part
        order = _elim_order(p, x_cols)
        if order.size:
            x_full[order] = np.asarray(comp.expr @ x_part).ravel() + comp.const
        obj = float(c_all @ x_full)

    def _res(key):
        v = sol.get(key)
        return float(v) if v is not None else np.nan

    residuals = {
        "primal": _res("primal infeasibility"),
        "dual": _res("dual infeasibility"),
        "gap": _res("gap"),
        "relative_gap": _res("relative gap"),
        "primal_objective": _res("primal objective"),
        "dual_objective": _res("dual objective"),
    }
    return ConicSolution(
        status=status,
        x=x_full,
        objective_value=obj,
        residuals=residuals,
        iterations=iters,
        trace=trace,
    )


def _elim_order(p: ConicProblem, x_cols: np.ndarray) -> np.ndarray:
    mask = np.ones(p.n_var, dtype=bool)
    mask[x_cols] = False
    return np.flatnonzero(mask)


def _solve_cvxopt(p: ConicProblem, tol: float, max_iter: int) -> ConicSolution:
    return solve_compiled(compile_problem(p), tol=tol, max_iter=max_iter)


_BACKENDS = {"cvxopt": _solve_cvxopt}


def solve(p: ConicProblem, tol: float = 1e-7, max_iter: int = 100,
          backend: str = "cvxopt") -> ConicSolution:
    """Solve a conic program; statuses: Optimal, PrimalInfeasible,
    DualInfeasible, MaxIterations, NumericalFailure."""
    p.validate()
    return _BACKENDS[backend](p, tol, max_iter)


def certify_solution(p: ConicProblem, s: ConicSolution, tol: float = 1e-7) -> dict:
    """Independently re-check an Optimal solution against the problem data.

    Verifies the equality system residual, cone membership (minimum
    eigenvalue per PSD block, minimum entry per nonneg block), and the
    reported objective.  Works on any candidate point, not just solver
    output.
    """
    if s.x is None:
        raise ValueError("solution carries no primal point")
    x = np.asarray(s.x, dtype=float)
    eq_res = 0.0
    if p.b_eq.size:
        scale = 1.0 + float(np.max(np.abs(p.b_eq)))
        eq_res = float(np.max(np.abs(p.a_eq @ x - p.b_eq))) / scale
    min_cone = np.inf
    for blk in p.cones:
        sl = x[blk.offset : blk.offset + blk.length]
        if blk.kind == "nonneg":
            val = float(sl.min()) if sl.size else np.inf
        else:
            val = float(np.linalg.eigvalsh(smat(sl, blk.side)).min())
        min_cone = min(min_cone, val)
    obj = float(p.c @ x)
    obj_err = abs(obj - s.objective_value) / max(1.0, abs(obj)) if s.objective_value is not None else np.inf
    report = {
        "equalities_ok": eq_res <= tol,
        "cones_ok": min_cone >= -tol,
        "objective_ok": obj_err <= tol,
        "max_eq_residual": eq_res,
        "min_cone_eig": min_cone if min_cone != np.inf else None,
        "objective_error": obj_err,
    }
    report["all_ok"] = bool(
        report["equalities_ok"] and report["cones_ok"] and report["objective_ok"]
    )
    return report
