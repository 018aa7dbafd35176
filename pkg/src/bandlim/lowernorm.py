"""Lower norms of band operators and their support-localized variants.

The lower norm of a column restriction ``A|_F`` is the infimum of
``|A v|_p / |v|_p`` over nonzero vectors supported in F (the restriction acts
from functions on F to functions on the whole space).  For p = 2 this is the
smallest singular value of the restricted matrix; for other exponents a
deterministic multi-start descent is used and tagged as such, with a brute
force grid oracle available in small dimension.

``nu_s`` restricts witnesses to ball neighborhoods inside F, and
``localization_check`` computes the support bound under which the localized
value provably sits within delta of the global one, given the sparsifier
constants of the underlying space.  ``essential_nu`` sweeps exclusion balls
around the designated center to probe essential behavior, and
``witness_cascade`` drills nested witness balls down a schedule of scales.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import eigsh

from .operators import OperatorError, Vector, schur_bound
from .serialize import round15


@dataclass
class NuReport:
    """Result of a lower-norm computation with the attaining witness."""

    value: float
    witness: Vector
    support_diameter: float
    method: str            # exact-svd | iterative-svd | optimizer | brute-force
    tolerance: float
    subset: tuple = ()
    ball_center: int = None

    def to_json(self):
        sup = self.witness.support()
        wit = {}
        for x in sup:
            block = self.witness.values[x]
            wit[int(x)] = [[round15(c.real), round15(c.imag)] for c in block]
        return {
            "value": round15(self.value),
            "method": self.method,
            "tolerance": round15(self.tolerance),
            "support_diameter": round15(self.support_diameter),
            "witness": wit,
            "subset_size": len(self.subset),
            "ball_center": self.ball_center,
        }


def _restricted(A, F):
    """Column restriction of A to F with zero rows trimmed.

    Returns (row_ids, dense_or_sparse_matrix).  Dropping all-zero rows leaves
    the singular values unchanged.
    """
    F = np.asarray(sorted(int(x) for x in F), dtype=np.int64)
    k = A.block_dim
    mask = np.isin(A.cols, F)
    row_ids = np.unique(A.rows[mask])
    M = A.csr()
    col_idx = (F[:, None] * k + np.arange(k)[None, :]).reshape(-1)
    row_idx = (row_ids[:, None] * k + np.arange(k)[None, :]).reshape(-1)
    sub = M[row_idx][:, col_idx] if len(row_idx) else M[:0][:, col_idx]
    return F, row_ids, sub


def _witness_vector(A, F, coeffs, p):
    vals = np.zeros((A.space.n, A.block_dim), dtype=np.complex128)
    vals[F] = coeffs.reshape(len(F), A.block_dim)
    return Vector(A.space, vals, p=p, block_dim=A.block_dim)


def _support_diameter(space, vec):
    sup = vec.support()
    if len(sup) <= 1:
        return 0.0
    return float(space.pairwise(sup, sup).max())


def _sigma_min_dense(sub):
    dense = np.asarray(sub.todense()) if hasattr(sub, "todense") else sub
    if dense.shape[0] == 0:
        m = dense.shape[1]
        vec = np.zeros(m, dtype=np.complex128)
        vec[0] = 1.0
        return 0.0, vec
    u, s, vh = np.linalg.svd(dense, full_matrices=False)
    i = int(np.argmin(s))
    return float(s[i]), vh[i].conj()


def _sigma_min_iterative(sub):
    G = (sub.conj().T @ sub).tocsc()
    m = G.shape[0]
    v0 = np.ones(m) / np.sqrt(m)
    try:
        vals, vecs = eigsh(G, k=1, sigma=0, which="LM", v0=v0, tol=0)
    except Exception:
        vals, vecs = eigsh(G, k=1, which="SA", v0=v0, tol=1e-12, maxiter=50000)
    lam = max(float(vals[0]), 0.0)
    return float(np.sqrt(lam)), vecs[:, 0]


def _site_norms(flat, k):
    return np.sqrt((np.abs(flat.reshape(-1, k)) ** 2).sum(axis=1))


def _pnorm(flat, k, p):
    s = _site_norms(flat, k)
    return float((s ** p).sum() ** (1.0 / p))


def _nu_descent(A, F, sub, p, restarts=16, max_iter=80):
    """Multi-start reweighted descent for the p lower norm of A|_F.

    Each step freezes the site weights s^(p-2) of the current iterate and
    minimizes the resulting weighted 2-norm quotient exactly (a smallest
    singular vector problem); the weights are then refreshed.  At p = 2 the
    weights are constant and the first step is already exact.  Steps that
    fail to decrease the true quotient are damped toward the previous
    iterate, and the best visited value wins.
    """
    k = A.block_dim
    m = sub.shape[1]
    dense = np.asarray(sub.todense())
    eps = 1e-10   # site-norm smoothing floor; keeps the weights finite

    def sites(flat):
        s2 = (np.abs(flat.reshape(-1, k)) ** 2).sum(axis=1)
        return np.sqrt(s2 + eps * eps)

    def value(v):
        den = _pnorm(v, k, p)
        if den == 0:
            return np.inf
        return _pnorm(dense @ v, k, p) / den

    def step(v):
        sw = sites(dense @ v)
        sv = sites(v)
        da = np.repeat(sw ** ((p - 2.0) / 2.0), k)
        db = np.repeat(sv ** ((2.0 - p) / 2.0), k)
        B = dense * da[:, None] * db[None, :]
        _, s, vh = np.linalg.svd(B, full_matrices=False)
        v_new = db * vh[-1].conj()
        nrm = np.linalg.norm(v_new)
        return v_new / nrm if nrm > 0 else v

    starts = []
    _, _, warm = nu(A, F, p=2.0, _raw=True)
    if warm is not None and np.linalg.norm(warm) > 0:
        starts.append(warm / np.linalg.norm(warm))
    j = 0
    while len(starts) < restarts:
        rng = np.random.default_rng(9000 + j)
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        starts.append(z / np.linalg.norm(z))
        j += 1

    best_val, best_v = np.inf, None
    for v in starts:
        cur = value(v)
        if cur < best_val:
            best_val, best_v = cur, v
        stall = 0
        for _ in range(max_iter):
            cand = step(v)
            cval = value(cand)
            if cval >= cur - 1e-14:
                damped = v + cand
                damped /= np.linalg.norm(damped)
                dval = value(damped)
                if dval < cur - 1e-14:
                    cand, cval = damped, dval
                else:
                    stall += 1
                    if stall >= 2:
                        break
            else:
                stall = 0
            if cval < cur:
                v, cur = cand, cval
            if cur < best_val:
                best_val, best_v = cur, v
    return float(best_val), best_v


def nu(A, F, p=2.0, _raw=False):
    """Lower norm of the column restriction A|_F.

    For p = 2 the smallest singular value of the restricted matrix (dense up
    to 400 columns, shift-invert Lanczos beyond).  For other exponents a
    16-start deterministic descent over the quotient |Av|_p / |v|_p, warm
    started from the p = 2 witness.
    """
    if len(F) == 0:
        raise OperatorError("lower norm needs a nonempty column set")
    Fs, row_ids, sub = _restricted(A, F)
    k = A.block_dim
    if p == 2.0:
        if sub.shape[1] <= 400:
            val, coeffs = _sigma_min_dense(sub)
            method, tol = "exact-svd", 1e-10
        else:
            val, coeffs = _sigma_min_iterative(sub)
            method, tol = "iterative-svd", 1e-10
        if _raw:
            return val, Fs, coeffs
    else:
        val, coeffs = _nu_descent(A, Fs, sub, p)
        method, tol = "optimizer", 1e-6
    wit = _witness_vector(A, Fs, coeffs, p)
    nrm = wit.norm()
    if nrm > 0:
        wit = Vector(A.space, wit.values / nrm, p=p, block_dim=k)
    return NuReport(value=val, witness=wit,
                    support_diameter=_support_diameter(A.space, wit),
                    method=method, tolerance=tol, subset=tuple(int(x) for x in Fs))


def nu_brute(A, F, p, samples=10 ** 6, seed=0):
    """Grid oracle for the p lower norm, real coefficients, dimension <= 5.

    Scans a uniform cube grid (about ``samples`` points) of real coefficient
    vectors on F; returns the smallest quotient found.  An upper bound on the
    true lower norm by construction.
    """
    Fs, row_ids, sub = _restricted(A, F)
    k = A.block_dim
    m = sub.shape[1]
    if m > 5:
        raise OperatorError("brute-force oracle limited to dimension 5")
    per_axis = max(3, int(round(samples ** (1.0 / m))))
    axis = np.linspace(-1.0, 1.0, per_axis)
    grids = np.meshgrid(*([axis] * m), indexing="ij")
    V = np.stack([g.reshape(-1) for g in grids], axis=-1)
    V = V[np.any(V != 0, axis=1)]
    dense = np.asarray(sub.todense())
    best = np.inf
    best_v = None
    for lo in range(0, len(V), 100000):
        chunk = V[lo:lo + 100000]
        W = chunk @ dense.T
        sw = np.sqrt((np.abs(W.reshape(len(chunk), -1, k)) ** 2).sum(axis=2))
        sv = np.sqrt((np.abs(chunk.reshape(len(chunk), -1, k)) ** 2).sum(axis=2))
        num = (sw ** p).sum(axis=1) ** (1.0 / p)
        den = (sv ** p).sum(axis=1) ** (1.0 / p)
        q = num / den
        i = int(np.argmin(q))
        if q[i] < best:
            best = float(q[i])
            best_v = chunk[i]
    return best, _witness_vector(A, Fs, best_v.astype(np.complex128), p)


def nu_s(A, F, s, p=2.0, threads=1):
    """Localized lower norm: min of nu over restrictions F & B(x; s), x in F.

    Identical restriction sets are computed once; the minimum is reduced in
    ascending center order so the result is independent of thread count.
    """
    if s < 0:
        raise OperatorError("support scale must be nonnegative")
    F = sorted(int(x) for x in F)
    if not F:
        raise OperatorError("lower norm needs a nonempty column set")
    Fset = set(F)
    jobs = []
    seen = set()
    for x in F:
        sub = frozenset(int(y) for y in A.space.ball(x, s) if y in Fset)
        if not sub or sub in seen:
            continue
        seen.add(sub)
        jobs.append((x, tuple(sorted(sub))))

    def work(job):
        x, sub = job
        rep = nu(A, sub, p=p)
        return x, rep

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    best = None
    for x, rep in results:
        if best is None or rep.value < best[1].value:
            best = (x, rep)
    x, rep = best
    rep.ball_center = int(x)
    return rep


@dataclass
class LocalizationReport:
    s: int
    verified: bool
    worst_gap: float
    c_prime: float
    separation: int
    family_size: int
    delta: float


def localization_check(A, delta, sparsifier, family, p=2.0, norm_bound=None):
    """Support bound for delta-accurate localized lower norms, then verify.

    The bound s comes from the sparsifier constants: the capture fraction c'
    is raised until the splitting error M ((1-c')/c')^(1/p) plus the rescaling
    error M (c'^(-1/p) - 1) drops below delta, and s is the part diameter the
    sparsifier needs at separation 2 prop(A) + 1 for that fraction.  The
    verification sweep checks nu_s <= nu + delta on every F in the family.
    """
    if delta <= 0:
        raise OperatorError("delta must be positive")
    M = schur_bound(A, p) if norm_bound is None else float(norm_bound)
    r = A.propagation
    m = 2 * r + 1

    def err(c):
        return M * ((1.0 - c) / c) ** (1.0 / p) + M * (c ** (-1.0 / p) - 1.0)

    lo, hi = 0.5, 1.0 - 1e-15
    if err(hi) > delta:
        raise OperatorError("delta unreachable for this norm bound")
    while err(lo) <= delta and lo > 1e-12:
        lo /= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if err(mid) <= delta:
            hi = mid
        else:
            lo = mid
    c_prime = hi
    s = sparsifier.diameter_for(m, c_prime)

    worst = 0.0
    count = 0
    for F in family:
        base = nu(A, F, p=p).value
        local = nu_s(A, F, s, p=p).value
        worst = max(worst, local - base)
        count += 1
    return LocalizationReport(s=int(s), verified=bool(worst <= delta + 1e-12),
                              worst_gap=float(worst), c_prime=float(c_prime),
                              separation=int(m), family_size=count,
                              delta=float(delta))


def essential_nu(A, exclusion_radii, p=2.0, margin=None, threads=1):
    """Lower norms off growing balls around the designated center.

    Columns are restricted to interior-margin points outside each exclusion
    ball; rows are never restricted.  A profile tending to zero flags
    essential spectrum at zero, a flat positive one is Fredholm-like.
    """
    space = A.space
    margin = A.propagation if margin is None else margin
    inter = [int(x) for x in space.interior(margin)]
    center_row = space.row(space.center)
    out = []

    def work(r):
        F = [x for x in inter if center_row[x] > r]
        if not F:
            raise OperatorError(f"exclusion radius {r} exhausts the space")
        return nu(A, F, p=p)

    radii = [float(r) for r in exclusion_radii]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(work, radii))
    else:
        reps = [work(r) for r in radii]
    for r, rep in zip(radii, reps):
        out.append((r, rep))
    return out


def witness_cascade(A, delta_schedule, s_schedule, p=2.0, F=None):
    """Nested witness balls down a schedule of shrinking support scales.

    Scales must be strictly increasing with s[k+1] > 2 s[k]; stages run from
    the largest scale down, each restricting to the ball found by the
    previous one.  Returns (center, radius, value) triples in stage order.
    """
    s_schedule = [int(s) for s in s_schedule]
    if any(b <= a for a, b in zip(s_schedule, s_schedule[1:])):
        raise OperatorError("support schedule must be strictly increasing")
    if any(b <= 2 * a for a, b in zip(s_schedule, s_schedule[1:])):
        raise OperatorError("support schedule must more than double each step")
    if delta_schedule is None:
        delta_schedule = [2.0 ** (-k) for k in range(1, len(s_schedule) + 1)]
    if len(delta_schedule) != len(s_schedule):
        raise OperatorError("schedules have different lengths")

    space = A.space
    if F is None:
        F = [int(x) for x in space.interior(A.propagation)]
    F_cur = sorted(int(x) for x in F)
    out = []
    for s in reversed(s_schedule):
        rep = nu_s(A, F_cur, s, p=p)
        out.append((int(rep.ball_center), int(s), float(rep.value)))
        ball = set(int(y) for y in space.ball(rep.ball_center, s))
        F_cur = [x for x in F_cur if x in ball]
    return out
