"""Sparse band operator algebra over a finite metric space.

A band operator is a point-indexed matrix whose nonzero entries sit within a
fixed distance (the propagation) of the diagonal.  Entries are complex scalars
or small square blocks of a fixed dimension.  The module provides the algebra
operations, vector action in weighted p-norms, the exact decomposition into
multiplication operators composed with partial translations, certified Schur
norm bounds, and a deterministic power-iteration 2-norm.

Band-dominated operators (norm limits of band operators) are represented as a
band operator together with a caller-supplied approximation error; see
``BandDominated``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .space import PartialTranslation, SpaceError


class OperatorError(ValueError):
    """Raised on malformed operator input (bad ids, duplicates, mismatch)."""


def _block_norms(blocks):
    """Spectral norm of each k-by-k block (absolute value when k = 1)."""
    if blocks.shape[1] == 1:
        return np.abs(blocks[:, 0, 0])
    return np.linalg.svd(blocks, compute_uv=False)[:, 0]


class BandOperator:
    """Sparse point-indexed matrix with propagation and entry-bound metadata.

    Entries are stored as coordinate triplets sorted by (row, col); ``blocks``
    has shape (nnz, k, k) with k the block dimension.  Instances are immutable
    after construction and all derived quantities are cached.
    """

    def __init__(self, space, rows, cols, blocks, block_dim=1, p=2.0):
        self.space = space
        self.block_dim = int(block_dim)
        self.p = float(p)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        blocks = np.asarray(blocks, dtype=np.complex128)
        if blocks.ndim == 1:
            blocks = blocks.reshape(-1, 1, 1)
        if blocks.shape[1:] != (self.block_dim, self.block_dim):
            raise OperatorError("block shape does not match block_dim")
        order = np.lexsort((cols, rows))
        self.rows = rows[order]
        self.cols = cols[order]
        self.blocks = blocks[order]
        if len(self.rows):
            key = self.rows * space.n + self.cols
            if np.any(np.diff(key) == 0):
                i = int(np.nonzero(np.diff(key) == 0)[0][0])
                raise OperatorError(
                    f"duplicate entry at ({self.rows[i]}, {self.cols[i]})")
            if self.rows.min() < 0 or self.rows.max() >= space.n \
                    or self.cols.min() < 0 or self.cols.max() >= space.n:
                raise OperatorError("entry index outside the space")
        self._csr = None
        self._entry_index = None
        dists = space.pair_dist(self.rows, self.cols)
        self.propagation = int(dists.max()) if len(dists) else 0
        sups = _block_norms(self.blocks) if len(self.blocks) else np.zeros(0)
        self.entry_sup = float(sups.max()) if len(sups) else 0.0

    @property
    def nnz(self):
        return len(self.rows)

    def csr(self):
        """Unfolded (n*k, n*k) sparse matrix; cached."""
        if self._csr is None:
            n, k = self.space.n, self.block_dim
            if k == 1:
                self._csr = csr_matrix(
                    (self.blocks[:, 0, 0], (self.rows, self.cols)), shape=(n, n))
            else:
                bi, bj = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
                r = (self.rows[:, None, None] * k + bi[None]).reshape(-1)
                c = (self.cols[:, None, None] * k + bj[None]).reshape(-1)
                self._csr = csr_matrix(
                    (self.blocks.reshape(-1), (r, c)), shape=(n * k, n * k))
        return self._csr

    def to_dense(self):
        nk = self.space.n * self.block_dim
        if nk > 4000:
            raise OperatorError("operator too large for a dense matrix")
        return np.asarray(self.csr().todense())

    def entry_index(self):
        """Dict (row, col) -> position into the block array; cached."""
        if self._entry_index is None:
            self._entry_index = {(int(r), int(c)): i for i, (r, c) in
                                 enumerate(zip(self.rows, self.cols))}
        return self._entry_index

    def entry(self, x, y):
        i = self.entry_index().get((x, y))
        if i is None:
            return np.zeros((self.block_dim, self.block_dim), dtype=np.complex128)
        return self.blocks[i]

    def triplets(self):
        for r, c, b in zip(self.rows, self.cols, self.blocks):
            yield int(r), int(c), (b[0, 0] if self.block_dim == 1 else b.copy())

    def __eq__(self, other):
        return (isinstance(other, BandOperator)
                and self.space is other.space
                and self.block_dim == other.block_dim
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.blocks, other.blocks))


@dataclass
class BandDominated:
    """Band operator plus an explicit approximation-error bound."""

    op: BandOperator
    approx_error: float


class Vector:
    """Finitely supported vector with a p-exponent and block-column values."""

    def __init__(self, space, values, p=2.0, block_dim=1):
        self.space = space
        self.p = float(p)
        self.block_dim = int(block_dim)
        values = np.asarray(values, dtype=np.complex128)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.shape != (space.n, self.block_dim):
            raise OperatorError("vector shape does not match space/block_dim")
        self.values = values

    @classmethod
    def basis(cls, space, x, p=2.0, block_dim=1, component=0):
        v = np.zeros((space.n, block_dim), dtype=np.complex128)
        v[x, component] = 1.0
        return cls(space, v, p=p, block_dim=block_dim)

    @classmethod
    def from_dict(cls, space, entries, p=2.0, block_dim=1):
        v = np.zeros((space.n, block_dim), dtype=np.complex128)
        for x, val in entries.items():
            v[int(x)] = val
        return cls(space, v, p=p, block_dim=block_dim)

    def flat(self):
        return self.values.reshape(-1)

    def norm(self):
        """(sum over points of |v(x)|^p)^(1/p), point norms Euclidean."""
        site = np.sqrt((np.abs(self.values) ** 2).sum(axis=1))
        if np.all(site == 0):
            return 0.0
        return float((site ** self.p).sum() ** (1.0 / self.p))

    def support(self):
        return np.nonzero(np.any(self.values != 0, axis=1))[0]


def from_triplets(space, triplets, block_dim=1, p=2.0):
    """Build a band operator from (row, col, value) triplets.

    Values are scalars for block_dim 1, else k-by-k arrays.  Duplicate (row,
    col) pairs and out-of-range ids are rejected.
    """
    rows, cols, blocks = [], [], []
    k = int(block_dim)
    for x, y, val in triplets:
        x, y = int(x), int(y)
        if x < 0 or x >= space.n or y < 0 or y >= space.n:
            raise OperatorError(f"entry index ({x}, {y}) outside the space")
        rows.append(x)
        cols.append(y)
        b = np.asarray(val, dtype=np.complex128)
        if k == 1 and b.ndim == 0:
            b = b.reshape(1, 1)
        if b.shape != (k, k):
            raise OperatorError(f"entry at ({x}, {y}) has wrong block shape")
        blocks.append(b)
    if not rows:
        return BandOperator(space, [], [], np.zeros((0, k, k)), block_dim=k, p=p)
    return BandOperator(space, rows, cols, np.stack(blocks), block_dim=k, p=p)


def identity(space, block_dim=1, p=2.0):
    eye = np.eye(block_dim, dtype=np.complex128)
    ids = np.arange(space.n)
    return BandOperator(space, ids, ids,
                        np.repeat(eye[None], space.n, axis=0),
                        block_dim=block_dim, p=p)


def multiplier(space, func, block_dim=1, p=2.0):
    """Diagonal operator from a point function (propagation zero)."""
    rows, blocks = [], []
    for x in range(space.n):
        val = func(x) if callable(func) else func[x]
        b = np.asarray(val, dtype=np.complex128)
        if block_dim == 1 and b.ndim == 0:
            b = b.reshape(1, 1)
        if np.any(b != 0):
            rows.append(x)
            blocks.append(b)
    if not rows:
        return from_triplets(space, [], block_dim=block_dim, p=p)
    return BandOperator(space, rows, rows, np.stack(blocks),
                        block_dim=block_dim, p=p)


def partial_translation_operator(space, t: PartialTranslation, block_dim=1, p=2.0):
    """Operator with entry 1 at (t(x), x) for x in the domain of t."""
    eye = np.eye(block_dim, dtype=np.complex128)
    rows = np.array(t.image, dtype=np.int64)
    cols = np.array(t.domain, dtype=np.int64)
    return BandOperator(space, rows, cols,
                        np.repeat(eye[None], len(rows), axis=0),
                        block_dim=block_dim, p=p)


def _check_compat(A, B):
    if A.space is not B.space and (A.space.name != B.space.name
                                   or A.space.n != B.space.n):
        raise OperatorError("operators live on different spaces")
    if A.block_dim != B.block_dim:
        raise OperatorError("block dimension mismatch")


def _from_csr(space, mat, block_dim, p):
    mat = mat.tocoo()
    k = block_dim
    if k == 1:
        keep = mat.data != 0
        return BandOperator(space, mat.row[keep], mat.col[keep],
                            mat.data[keep], block_dim=1, p=p)
    acc = {}
    for r, c, v in zip(mat.row, mat.col, mat.data):
        if v == 0:
            continue
        key = (int(r) // k, int(c) // k)
        b = acc.get(key)
        if b is None:
            b = np.zeros((k, k), dtype=np.complex128)
            acc[key] = b
        b[int(r) % k, int(c) % k] = v
    if not acc:
        return from_triplets(space, [], block_dim=k, p=p)
    keys = sorted(acc)
    rows = [x for x, _ in keys]
    cols = [y for _, y in keys]
    return BandOperator(space, rows, cols, np.stack([acc[key] for key in keys]),
                        block_dim=k, p=p)


def compose(A, B):
    """Operator product A B (propagation at most prop(A) + prop(B))."""
    _check_compat(A, B)
    return _from_csr(A.space, A.csr() @ B.csr(), A.block_dim, A.p)


def add(A, B):
    _check_compat(A, B)
    return _from_csr(A.space, (A.csr() + B.csr()).tocsr(), A.block_dim, A.p)


def scale(A, alpha):
    if A.nnz == 0:
        return A
    return BandOperator(A.space, A.rows, A.cols, A.blocks * complex(alpha),
                        block_dim=A.block_dim, p=A.p)


def subtract(A, B):
    return add(A, scale(B, -1.0))


def adjoint(A):
    """Transpose-conjugate of A."""
    blocks = np.conj(np.transpose(A.blocks, (0, 2, 1)))
    return BandOperator(A.space, A.cols, A.rows, blocks,
                        block_dim=A.block_dim, p=A.p)


def apply_operator(A, v: Vector) -> Vector:
    """Matrix action (Av)(x) = sum_y A_xy v(y)."""
    if A.space is not v.space and A.space.n != v.space.n:
        raise OperatorError("operator and vector live on different spaces")
    if A.block_dim != v.block_dim:
        raise OperatorError("block dimension mismatch")
    w = A.csr() @ v.flat()
    return Vector(v.space, w.reshape(v.space.n, v.block_dim), p=v.p,
                  block_dim=v.block_dim)


# -- decomposition into multipliers and partial translations ------------------


@dataclass
class Decomposition:
    """Exact splitting A = sum_k f_k V_k (multipliers times translations)."""

    space: object
    block_dim: int
    multipliers: list        # dicts point -> block, supported on range(t_k)
    translations: list       # PartialTranslation per summand

    def __len__(self):
        return len(self.translations)

    def summands(self):
        out = []
        for f, t in zip(self.multipliers, self.translations):
            V = partial_translation_operator(self.space, t, self.block_dim)
            F = multiplier(self.space, lambda x, f=f: f.get(
                x, np.zeros((self.block_dim, self.block_dim))), self.block_dim)
            out.append(compose(F, V))
        return out

    def reconstruct(self):
        rows, cols, blocks = [], [], []
        for f, t in zip(self.multipliers, self.translations):
            for x, y in zip(t.domain, t.image):
                rows.append(y)
                cols.append(x)
                blocks.append(np.asarray(f[y], dtype=np.complex128).reshape(
                    self.block_dim, self.block_dim))
        if not rows:
            return from_triplets(self.space, [], block_dim=self.block_dim)
        return BandOperator(self.space, rows, cols, np.stack(blocks),
                            block_dim=self.block_dim)

    def multiplier_sups(self):
        out = []
        for f in self.multipliers:
            if not f:
                out.append(0.0)
                continue
            arr = np.stack([np.asarray(b, dtype=np.complex128).reshape(
                self.block_dim, self.block_dim) for b in f.values()])
            out.append(float(_block_norms(arr).max()))
        return out


def decompose(A: BandOperator) -> Decomposition:
    """Split a band operator into multipliers composed with translations.

    The nonzero entries, viewed as edges of a bipartite graph (columns to
    rows), are edge-colored with at most max-degree colors via augmenting
    color swaps; each color class is the graph of one partial translation.
    The count is therefore at most growth(prop(A)) and reconstruction is
    entrywise exact.
    """
    n = A.space.n
    row_used = {}   # row id -> {color: entry index}
    col_used = {}
    color_of = np.full(A.nnz, -1, dtype=np.int64)

    def smallest_free(used):
        c = 0
        while c in used:
            c += 1
        return c

    for e in range(A.nnz):
        y, x = int(A.rows[e]), int(A.cols[e])
        ru = row_used.setdefault(y, {})
        cu = col_used.setdefault(x, {})
        c1 = smallest_free(ru)
        c2 = smallest_free(cu)
        if c1 != c2:
            # c1 is free at row y but used at column x.  Flip the alternating
            # c1/c2 path starting from x; it cannot reach row y (rows on the
            # path are entered via c1-colored edges, and y has none), so after
            # the flip c1 is free at both endpoints of e.
            cur = cu.get(c1)
            entry_is_col = True
            old, new = c1, c2
            guard = 0
            while cur is not None:
                cy, cx = int(A.rows[cur]), int(A.cols[cur])
                if entry_is_col:
                    exit_used = row_used.setdefault(cy, {})
                    entry_used = col_used.setdefault(cx, {})
                else:
                    exit_used = col_used.setdefault(cx, {})
                    entry_used = row_used.setdefault(cy, {})
                nxt = exit_used.get(new)
                del exit_used[old]
                exit_used[new] = cur
                entry_used[new] = cur
                color_of[cur] = new
                cur = nxt
                entry_is_col = not entry_is_col
                old, new = new, old
                guard += 1
                if guard > 2 * A.nnz:
                    raise AssertionError("edge coloring path did not terminate")
        ru[c1] = e
        cu[c1] = e
        color_of[e] = c1

    ncolors = int(color_of.max()) + 1 if A.nnz else 0
    multipliers, translations = [], []
    for c in range(ncolors):
        idx = np.nonzero(color_of == c)[0]
        dom = [int(A.cols[i]) for i in idx]
        img = [int(A.rows[i]) for i in idx]
        order = np.argsort(dom)
        dom = [dom[i] for i in order]
        img = [img[i] for i in order]
        disp = int(A.space.pair_dist(np.array(img), np.array(dom)).max()) \
            if dom else 0
        translations.append(PartialTranslation(tuple(dom), tuple(img), disp))
        f = {int(A.rows[i]): A.blocks[i].copy() for i in idx}
        multipliers.append(f)
    return Decomposition(A.space, A.block_dim, multipliers, translations)


# -- disjointness three-coloring ----------------------------------------------


def three_color(indices, s, t):
    """Partition indices into at most three classes B_i with s(B_i), t(B_i) disjoint.

    ``s`` and ``t`` are dicts (bijections onto a common codomain) that disagree
    everywhere.  Walks the orbits of s^{-1} o t: even cycles alternate two
    classes, odd cycles park their last element in the third.
    """
    idx = sorted(indices)
    for a in idx:
        if a not in s or a not in t:
            raise OperatorError(f"maps not defined at index {a!r}")
        if s[a] == t[a]:
            raise OperatorError(f"s and t agree at index {a!r}")
    s_vals = list(s[a] for a in idx)
    t_vals = list(t[a] for a in idx)
    if len(set(s_vals)) != len(idx) or len(set(t_vals)) != len(idx):
        raise OperatorError("maps are not injective")
    if set(s_vals) != set(t_vals):
        raise OperatorError("maps do not share a codomain")
    s_inv = {s[a]: a for a in idx}
    u = {a: s_inv[t[a]] for a in idx}

    classes = ([], [], [])
    seen = set()
    for a in idx:
        if a in seen:
            continue
        orbit = [a]
        seen.add(a)
        cur = u[a]
        while cur != a:
            orbit.append(cur)
            seen.add(cur)
            cur = u[cur]
        L = len(orbit)
        for i, b in enumerate(orbit):
            if L % 2 == 1 and i == L - 1:
                classes[2].append(b)
            else:
                classes[i % 2].append(b)
    return tuple(sorted(cl) for cl in classes)


# -- norm bounds ---------------------------------------------------------------


def schur_bound(A: BandOperator, p=2.0) -> float:
    """Certified upper bound for the p-operator norm.

    The smaller of the ball-count bound entry_sup * growth(prop) and the
    interpolation bound (max column l1)^(1/p) (max row l1)^(1/q).
    """
    if A.nnz == 0:
        return 0.0
    norms = _block_norms(A.blocks)
    row_sums = np.zeros(A.space.n)
    col_sums = np.zeros(A.space.n)
    np.add.at(row_sums, A.rows, norms)
    np.add.at(col_sums, A.cols, norms)
    q = p / (p - 1.0)
    if p == 2.0:
        interp = float(np.sqrt(col_sums.max() * row_sums.max()))
    else:
        interp = col_sums.max() ** (1.0 / p) * row_sums.max() ** (1.0 / q)
    basic = A.entry_sup * A.space.growth(A.propagation)
    return float(min(interp, basic))


def norm2(A: BandOperator, rtol=1e-10, max_iter=10000, method="auto") -> float:
    """Largest singular value (p = 2 operator norm).

    ``method='power'`` runs deterministic power iteration on A*A from the
    normalized all-ones vector, stopping when the eigenvalue estimate moves by
    less than rtol relatively; it raises after max_iter without convergence.
    ``'auto'`` uses a dense SVD for small operators (the iteration cap makes
    rtol unreachable when the top of the spectrum clusters) and power
    iteration beyond.
    """
    nk = A.space.n * A.block_dim
    if A.nnz == 0:
        return 0.0
    if method == "auto":
        method = "dense" if nk <= 600 else "power"
    if method == "dense":
        return float(np.linalg.norm(A.to_dense(), 2))
    M = A.csr()
    v = np.ones(nk, dtype=np.complex128) / np.sqrt(nk)
    lam_prev = -1.0
    for _ in range(max_iter):
        w = M @ v
        u = (w.conj() @ M).conj()
        lam = float(np.real(np.vdot(v, u)))
        nu_ = np.linalg.norm(u)
        if nu_ == 0:
            return 0.0
        v = u / nu_
        if lam_prev >= 0 and abs(lam - lam_prev) <= rtol * max(lam, 1e-300):
            return float(np.sqrt(max(lam, 0.0)))
        lam_prev = lam
    raise OperatorError(f"norm2 power iteration did not converge in {max_iter} steps")


# -- operator files ------------------------------------------------------------


def save_operator(path, A: BandOperator):
    """Write header JSON line plus CSV triplet body (exact round trip)."""
    import json
    lines = [json.dumps({"space_name": A.space.name, "block_dim": A.block_dim,
                         "p": A.p}, sort_keys=True)]
    k = A.block_dim
    for r, c, b in zip(A.rows, A.cols, A.blocks):
        cells = [str(int(r)), str(int(c))]
        for bi in range(k):
            for bj in range(k):
                cells.append(repr(float(b[bi, bj].real)))
                cells.append(repr(float(b[bi, bj].imag)))
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_operator(path, space):
    import json
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = json.loads(lines[0])
    if header["space_name"] != space.name:
        raise OperatorError(
            f"operator file expects space {header['space_name']!r}, got {space.name!r}")
    k = int(header["block_dim"])
    triplets = []
    for line in lines[1:]:
        if not line.strip():
            continue
        cells = line.split(",")
        x, y = int(cells[0]), int(cells[1])
        vals = [float(c) for c in cells[2:]]
        b = np.array([complex(vals[2 * i], vals[2 * i + 1])
                      for i in range(k * k)]).reshape(k, k)
        triplets.append((x, y, b if k > 1 else b[0, 0]))
    return from_triplets(space, triplets, block_dim=k, p=float(header["p"]))
