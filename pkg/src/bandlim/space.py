"""Finite metric spaces with discrete distance values and bounded geometry.

A ``Space`` is a finite ordered set of points (ids ``0..n-1``) with an integer
metric.  Distances are ceil-rounded on ingestion so the attained value set is
always a discrete subset of the nonnegative integers.  Generators cover
integer-lattice windows, quadrant windows, box spaces over cyclic quotients,
explicit distance matrices and graph shortest-path metrics.

Besides ball queries the module provides partial translations (for
group-structured windows), pointed isometry matching between a finite template
and balls of the space, and an interior-margin notion used to discard
truncation artifacts near the window boundary.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path


class SpaceError(ValueError):
    """Raised when a descriptor does not define a valid space."""


LATTICE_KINDS = ("zn-window", "n-window", "quadrant")
GROUP_KINDS = ("zn-window", "box-cycles")
DENSE_CAP = 1500


@dataclass(frozen=True)
class PartialTranslation:
    """Injective map between subsets of a space with bounded displacement."""

    domain: tuple
    image: tuple
    displacement: int

    def __post_init__(self):
        if len(self.domain) != len(self.image):
            raise SpaceError("domain and image length mismatch")
        if len(set(self.image)) != len(self.image):
            raise SpaceError("translation image is not injective")

    def as_dict(self):
        return dict(zip(self.domain, self.image))

    def inverse(self):
        return PartialTranslation(self.image, self.domain, self.displacement)


@dataclass(frozen=True)
class SubsetIsometry:
    """Distance-preserving bijection from a labeled template onto its image."""

    source: tuple      # template labels, in label order
    target: tuple      # image point ids, aligned with source

    def as_dict(self):
        return dict(zip(self.source, self.target))


@dataclass
class Template:
    """Finite pointed metric space used for window matching.

    ``dist`` is an integer matrix indexed by labels ``0..m-1``; ``base`` is the
    label of the designated basepoint (always 0 for canonical templates).
    ``labels`` optionally carries human-readable point names such as lattice
    offsets.
    """

    dist: np.ndarray
    base: int = 0
    labels: list = None

    def __post_init__(self):
        self.dist = np.asarray(self.dist, dtype=np.int64)
        if self.dist.ndim != 2 or self.dist.shape[0] != self.dist.shape[1]:
            raise SpaceError("template distance matrix must be square")

    @property
    def size(self):
        return self.dist.shape[0]

    def signature(self):
        """Isometry-invariant fingerprint: sorted rows, sorted."""
        rows = [tuple(sorted(r)) for r in self.dist.tolist()]
        return tuple(sorted(rows))

    def to_json(self):
        return {
            "size": int(self.size),
            "base": int(self.base),
            "dist": [int(v) for v in self.dist.reshape(-1)],
            "labels": None if self.labels is None else [str(l) for l in self.labels],
        }


def _ceil_sqrt_int(sq):
    """Exact integer ceil(sqrt(sq)) for a nonnegative integer array."""
    sq = np.asarray(sq, dtype=np.int64)
    r = np.floor(np.sqrt(sq.astype(np.float64))).astype(np.int64)
    r = np.where((r + 1) * (r + 1) <= sq, r + 1, r)
    r = np.where(r * r > sq, r - 1, r)
    return np.where(r * r == sq, r, r + 1)


def _lattice_dist(delta, norm):
    """Integer distance of coordinate differences under the window norm."""
    delta = np.abs(np.asarray(delta, dtype=np.int64))
    if norm == "linf":
        return delta.max(axis=-1)
    if norm == "l1":
        return delta.sum(axis=-1)
    if norm == "l2":
        return _ceil_sqrt_int((delta * delta).sum(axis=-1))
    raise SpaceError(f"unknown lattice norm {norm!r}")


class Space:
    """Finite strongly discrete metric space with cached geometry queries."""

    def __init__(self, name, kind, params, n, center, coords=None, matrix=None,
                 norm=None, lower=None, upper=None, components=None,
                 cross_distance=None):
        self.name = name
        self.kind = kind
        self.params = params
        self.n = int(n)
        self.center = int(center)
        self.coords = coords            # (n, dims) int64 for lattice kinds
        self.norm = norm
        self.lower = lower
        self.upper = upper
        self.components = components    # box-cycles: (comp_index, residue, modulus) arrays
        self.cross_distance = cross_distance
        self._matrix = matrix           # dense int64 matrix for explicit/graph kinds
        self._growth_cache = {}
        self._value_set = None
        self._dims = None if coords is None else coords.shape[1]

    # -- distance queries ---------------------------------------------------

    def dist(self, x, y):
        return int(self.pairwise(np.array([x]), np.array([y]))[0, 0])

    def pairwise(self, xs, ys):
        """Integer distance matrix between two id arrays."""
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        if self._matrix is not None:
            return self._matrix[np.ix_(xs, ys)]
        if self.kind in LATTICE_KINDS:
            a = self.coords[xs][:, None, :]
            b = self.coords[ys][None, :, :]
            return _lattice_dist(a - b, self.norm)
        if self.kind == "box-cycles":
            ci, res, mod = self.components
            same = ci[xs][:, None] == ci[ys][None, :]
            diff = np.abs(res[xs][:, None] - res[ys][None, :])
            k = mod[xs][:, None]
            cyc = np.minimum(diff, k - diff)
            return np.where(same, cyc, self.cross_distance)
        raise SpaceError(f"no metric for kind {self.kind!r}")

    def row(self, x):
        """Distances from point x to every point of the space."""
        return self.pairwise(np.array([x]), np.arange(self.n))[0]

    def pair_dist(self, xs, ys):
        """Elementwise distances between aligned id arrays."""
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        if xs.size == 0:
            return np.zeros(0, dtype=np.int64)
        if self._matrix is not None:
            return self._matrix[xs, ys]
        if self.kind in LATTICE_KINDS:
            return _lattice_dist(self.coords[xs] - self.coords[ys], self.norm)
        if self.kind == "box-cycles":
            ci, res, mod = self.components
            same = ci[xs] == ci[ys]
            diff = np.abs(res[xs] - res[ys])
            cyc = np.minimum(diff, mod[xs] - diff)
            return np.where(same, cyc, self.cross_distance)
        raise SpaceError(f"no metric for kind {self.kind!r}")

    def ball(self, x, r):
        """Sorted ids of the closed ball about x of radius r."""
        if x < 0 or x >= self.n:
            raise SpaceError(f"unknown point id {x}")
        if r < 0:
            raise SpaceError("radius must be nonnegative")
        r = math.floor(r)
        if self.kind in ("n-window", "zn-window", "quadrant") and self._dims == 1:
            c = int(self.coords[x, 0])
            lo = max(int(self.lower[0]), c - r)
            hi = min(int(self.upper[0]), c + r)
            return np.arange(lo - int(self.lower[0]), hi - int(self.lower[0]) + 1,
                             dtype=np.int64)
        if self.kind in LATTICE_KINDS:
            c = self.coords[x]
            axes = []
            for i in range(self._dims):
                lo = max(int(self.lower[i]), int(c[i]) - r)
                hi = min(int(self.upper[i]), int(c[i]) + r)
                axes.append(np.arange(lo, hi + 1, dtype=np.int64))
            grids = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([g.reshape(-1) for g in grids], axis=-1)
            keep = _lattice_dist(pts - c[None, :], self.norm) <= r
            pts = pts[keep]
            ids = self._lattice_ids(pts)
            return np.sort(ids)
        if self.kind == "box-cycles":
            d = self.row(x)
            return np.nonzero(d <= r)[0].astype(np.int64)
        d = self._matrix[x]
        return np.nonzero(d <= r)[0].astype(np.int64)

    def _lattice_ids(self, pts):
        """Row-major id of lattice coordinates (assumed inside the window)."""
        spans = self.upper - self.lower + 1
        rel = pts - self.lower[None, :]
        ids = np.zeros(len(pts), dtype=np.int64)
        for i in range(self._dims):
            ids = ids * spans[i] + rel[:, i]
        return ids

    def lattice_id(self, coord):
        """Id of a single lattice coordinate, or None if outside the window."""
        coord = np.asarray(coord, dtype=np.int64)
        if np.any(coord < self.lower) or np.any(coord > self.upper):
            return None
        return int(self._lattice_ids(coord[None, :])[0])

    # -- derived geometry ---------------------------------------------------

    @property
    def value_set(self):
        """Sorted list of attained distance values."""
        if self._value_set is None:
            self._value_set = self._compute_value_set()
        return self._value_set

    def _compute_value_set(self):
        if self._matrix is not None:
            return [int(v) for v in np.unique(self._matrix)]
        if self.kind in LATTICE_KINDS:
            spans = (self.upper - self.lower).astype(np.int64)
            if self.norm == "linf":
                return list(range(int(spans.max()) + 1))
            if self.norm == "l1":
                return list(range(int(spans.sum()) + 1))
            axes = [np.arange(s + 1) for s in spans]
            grids = np.meshgrid(*axes, indexing="ij")
            deltas = np.stack([g.reshape(-1) for g in grids], axis=-1)
            vals = np.unique(_lattice_dist(deltas, self.norm))
            return [int(v) for v in vals]
        if self.kind == "box-cycles":
            mods = self.params["moduli"]
            top = max(int(k) // 2 for k in mods)
            vals = set(range(top + 1))
            if len(mods) > 1:
                vals.add(int(self.cross_distance))
            return sorted(vals)
        raise SpaceError(f"no value set for kind {self.kind!r}")

    def growth(self, r):
        """Max ball size N(r) over all centers (bounded geometry constant)."""
        r = math.floor(max(r, 0))
        if r in self._growth_cache:
            return self._growth_cache[r]
        g = self._compute_growth(r)
        self._growth_cache[r] = g
        return g

    def _compute_growth(self, r):
        if self._matrix is not None:
            return int((self._matrix <= r).sum(axis=1).max())
        if self.kind in LATTICE_KINDS:
            spans = (self.upper - self.lower).astype(np.int64)
            if self.norm == "linf":
                out = 1
                for s in spans:
                    out *= min(2 * r + 1, int(s) + 1)
                return int(out)
            # non-separable norms: scan ball sizes over all window points
            best = 0
            for x in range(self.n):
                best = max(best, len(self.ball(x, r)))
            return best
        if self.kind == "box-cycles":
            ci, res, mod = self.components
            mods = [int(k) for k in self.params["moduli"]]
            if r < self.cross_distance:
                return max(min(2 * r + 1, k) for k in mods)
            rest = self.n
            return max(rest - k + min(2 * r + 1, k) for k in mods)
        raise SpaceError(f"no growth rule for kind {self.kind!r}")

    def margin(self, x):
        """Distance from x to the artificial window boundary (inf if none).

        Balls of radius at most margin(x) about x agree with the balls of the
        infinite model space the window was cut from.
        """
        if self.kind == "n-window":
            return int(self.upper[0] - self.coords[x, 0])
        if self.kind == "zn-window":
            c = self.coords[x]
            return int(min(np.minimum(c - self.lower, self.upper - c)))
        if self.kind == "quadrant":
            return int(min(self.upper - self.coords[x]))
        if self.kind == "box-cycles":
            ci, res, mod = self.components
            return min(int(self.cross_distance) - 1, int(mod[x]) // 4)
        return math.inf

    def interior(self, margin):
        """Ids whose window margin is at least ``margin``."""
        return np.array([x for x in range(self.n) if self.margin(x) >= margin],
                        dtype=np.int64)

    def dense_matrix(self):
        if self._matrix is not None:
            return self._matrix
        if self.n > 4000:
            raise SpaceError("space too large for a dense distance matrix")
        m = self.pairwise(np.arange(self.n), np.arange(self.n))
        return m

    # -- group structure ----------------------------------------------------

    @property
    def group_structured(self):
        return self.kind in GROUP_KINDS

    def offset_point(self, x, offset):
        """Point at a group offset from x, or None if it leaves the window."""
        if self.kind == "zn-window":
            return self.lattice_id(self.coords[x] + np.asarray(offset, dtype=np.int64))
        if self.kind == "box-cycles":
            ci, res, mod = self.components
            k = int(mod[x])
            target = (int(res[x]) + int(offset)) % k
            return int(x - int(res[x]) + target)
        return None

    def group_offsets(self, r):
        """Canonical list of group offsets with model distance at most r.

        Sorted by (distance from the identity, lexicographic order); for
        box-cycles the model group is the integers, matching cycle balls that
        stay within the interior margin.
        """
        r = math.floor(r)
        if self.kind == "zn-window":
            dims = self._dims
            rng = np.arange(-r, r + 1, dtype=np.int64)
            grids = np.meshgrid(*([rng] * dims), indexing="ij")
            offs = np.stack([g.reshape(-1) for g in grids], axis=-1)
            d = _lattice_dist(offs, self.norm)
            keep = d <= r
            offs, d = offs[keep], d[keep]
            order = sorted(range(len(offs)), key=lambda i: (int(d[i]), tuple(offs[i])))
            return [tuple(int(v) for v in offs[i]) for i in order]
        if self.kind == "box-cycles":
            return sorted(range(-r, r + 1), key=lambda g: (abs(g), g))
        raise SpaceError("space has no group structure")

    def group_offset_dist(self, off1, off2):
        """Model-group distance between two offsets."""
        if self.kind == "zn-window":
            a = np.asarray(off1, dtype=np.int64)
            b = np.asarray(off2, dtype=np.int64)
            return int(_lattice_dist((a - b)[None, :], self.norm)[0])
        if self.kind == "box-cycles":
            return abs(int(off1) - int(off2))
        raise SpaceError("space has no group structure")


def right_translations(space, offsets=None):
    """Translation maps restricted to the window, one per requested offset.

    Returns None for descriptors without group structure.  For lattice windows
    an offset is a coordinate tuple; for box spaces over cyclic quotients an
    integer acting by rotation within each component.
    """
    if not space.group_structured:
        return None
    if space.kind == "zn-window":
        if offsets is None:
            offsets = [tuple(int(v) for v in row) for row in np.eye(space._dims, dtype=np.int64)]
        out = []
        for off in offsets:
            off = np.asarray(off, dtype=np.int64)
            dom, img = [], []
            for x in range(space.n):
                y = space.lattice_id(space.coords[x] + off)
                if y is not None:
                    dom.append(x)
                    img.append(y)
            disp = int(_lattice_dist(off[None, :], space.norm)[0])
            out.append(PartialTranslation(tuple(dom), tuple(img), disp))
        return out
    if space.kind == "box-cycles":
        if offsets is None:
            offsets = [1]
        ci, res, mod = space.components
        out = []
        for g in offsets:
            img = [space.offset_point(x, g) for x in range(space.n)]
            diffs = [space.dist(x, y) for x, y in zip(range(space.n), img) if x != y]
            disp = max(diffs) if diffs else 0
            out.append(PartialTranslation(tuple(range(space.n)), tuple(img), disp))
        return out
    return None


# -- constructors -------------------------------------------------------------


def _check_metric_matrix(mat):
    """Validate metric axioms on an integer matrix; raise with a witness."""
    n = mat.shape[0]
    if np.any(np.diag(mat) != 0):
        i = int(np.nonzero(np.diag(mat))[0][0])
        raise SpaceError(f"nonzero self-distance at point {i}")
    off = mat + np.eye(n, dtype=np.int64) * (mat.max() + 1)
    if np.any(off <= 0):
        i, j = np.argwhere(off <= 0)[0]
        raise SpaceError(f"nonpositive distance between distinct points ({i}, {j})")
    if np.any(mat != mat.T):
        i, j = np.argwhere(mat != mat.T)[0]
        raise SpaceError(f"non-symmetric matrix at pair ({i}, {j})")
    for k in range(n):
        slack = mat[:, k][:, None] + mat[k, :][None, :] - mat
        if np.any(slack < 0):
            i, j = np.argwhere(slack < 0)[0]
            raise SpaceError(
                f"triangle inequality violated on triple ({i}, {k}, {j})")


def build_space(descriptor):
    """Construct a Space from a JSON-style descriptor.

    Supported kinds: ``zn-window`` (integer-lattice window with linf/l1/l2
    metric, ceil-rounded), ``n-window`` (initial segment of the naturals),
    ``quadrant`` (nonnegative lattice quadrant window), ``box-cycles`` (box
    space over cyclic quotient graphs), ``explicit`` (distance matrix) and
    ``graph`` (shortest-path metric of a connected graph).
    """
    if not isinstance(descriptor, dict) or "kind" not in descriptor:
        raise SpaceError("descriptor must be a dict with a 'kind' field")
    kind = descriptor["kind"]
    params = {k: v for k, v in descriptor.items() if k not in ("kind", "name")}
    name = descriptor.get("name", kind)

    if kind == "n-window":
        upper = int(params["upper"])
        if upper < 0:
            raise SpaceError("n-window upper bound must be nonnegative")
        coords = np.arange(upper + 1, dtype=np.int64)[:, None]
        sp = Space(name, kind, params, upper + 1, center=0, coords=coords,
                   norm="l1", lower=np.array([0], dtype=np.int64),
                   upper=np.array([upper], dtype=np.int64))
        return sp

    if kind == "zn-window":
        lower = np.asarray(params["lower"], dtype=np.int64)
        upper = np.asarray(params["upper"], dtype=np.int64)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise SpaceError("zn-window bounds must be 1-d and aligned")
        if np.any(upper < lower):
            raise SpaceError("zn-window upper bound below lower bound")
        norm = params.get("norm", "linf")
        if norm not in ("linf", "l1", "l2"):
            raise SpaceError(f"unknown lattice norm {norm!r}")
        axes = [np.arange(l, u + 1, dtype=np.int64) for l, u in zip(lower, upper)]
        grids = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([g.reshape(-1) for g in grids], axis=-1)
        n = len(coords)
        if n > 500000:
            raise SpaceError("lattice window too large")
        zero = np.zeros(len(lower), dtype=np.int64)
        sp = Space(name, kind, params, n, center=0, coords=coords, norm=norm,
                   lower=lower, upper=upper)
        cid = sp.lattice_id(np.clip(zero, lower, upper))
        sp.center = int(params.get("center", cid))
        return sp

    if kind == "quadrant":
        upper = params["upper"]
        if isinstance(upper, int):
            upper = [upper, upper]
        upper = np.asarray(upper, dtype=np.int64)
        norm = params.get("norm", "linf")
        lower = np.zeros(len(upper), dtype=np.int64)
        axes = [np.arange(0, u + 1, dtype=np.int64) for u in upper]
        grids = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([g.reshape(-1) for g in grids], axis=-1)
        sp = Space(name, kind, params, len(coords), center=0, coords=coords,
                   norm=norm, lower=lower, upper=upper)
        return sp

    if kind == "box-cycles":
        mods = [int(k) for k in params["moduli"]]
        if any(k < 3 for k in mods):
            raise SpaceError("cycle moduli must be at least 3")
        cross = int(params.get("cross_distance", 100))
        if max(k // 2 for k in mods) > 2 * cross:
            raise SpaceError("cross-component distance too small for triangle inequality")
        ci, res, mod = [], [], []
        for i, k in enumerate(mods):
            ci.extend([i] * k)
            res.extend(range(k))
            mod.extend([k] * k)
        comp = (np.array(ci, dtype=np.int64), np.array(res, dtype=np.int64),
                np.array(mod, dtype=np.int64))
        sp = Space(name, kind, params, len(comp[0]), center=0,
                   components=comp, cross_distance=cross)
        return sp

    if kind == "explicit":
        raw = np.asarray(params["matrix"], dtype=np.float64)
        if raw.ndim == 1:
            m = int(round(math.sqrt(len(raw))))
            if m * m != len(raw):
                raise SpaceError("row-major matrix length is not a square")
            raw = raw.reshape(m, m)
        if raw.shape[0] != raw.shape[1]:
            raise SpaceError("distance matrix must be square")
        if raw.shape[0] > DENSE_CAP:
            raise SpaceError("explicit space too large")
        if np.any(raw < 0):
            i, j = np.argwhere(raw < 0)[0]
            raise SpaceError(f"negative distance at pair ({i}, {j})")
        mat = np.ceil(raw - 1e-12).astype(np.int64)
        _check_metric_matrix(mat)
        sp = Space(name, kind, params, mat.shape[0],
                   center=int(params.get("center", 0)), matrix=mat)
        return sp

    if kind == "graph":
        n = int(params["n"])
        edges = params["edges"]
        rows = [int(u) for u, v in edges] + [int(v) for u, v in edges]
        cols = [int(v) for u, v in edges] + [int(u) for u, v in edges]
        if rows and (max(rows) >= n or min(rows) < 0):
            raise SpaceError("edge endpoint out of range")
        adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        d = shortest_path(adj, method="D", unweighted=True)
        if np.any(np.isinf(d)):
            raise SpaceError("graph is not connected")
        mat = d.astype(np.int64)
        _check_metric_matrix(mat)
        sp = Space(name, kind, params, n, center=int(params.get("center", 0)),
                   matrix=mat)
        return sp

    raise SpaceError(f"unknown descriptor kind {kind!r}")


def space_to_json(space):
    return {"name": space.name, "kind": space.kind, **space.params}


def space_from_json(obj):
    return build_space(obj)


def save_space(path, space):
    with open(path, "w") as fh:
        json.dump(space_to_json(space), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_space(path):
    with open(path) as fh:
        return space_from_json(json.load(fh))


# -- isometry matching --------------------------------------------------------


def _match_backtrack(tdist, base, ball_ids, bdist, center_pos, surjective):
    """Lexicographically least pointed isometry (template label order).

    Maps template label ``base`` to the ball point at ``center_pos``; remaining
    labels are assigned in order, trying candidate ids ascending.  Returns the
    image array (aligned with label order) or None.
    """
    m = tdist.shape[0]
    nb = len(ball_ids)
    if surjective and m != nb:
        return None
    if m > nb:
        return None
    order = [base] + [i for i in range(m) if i != base]
    pos_in_order = {lbl: k for k, lbl in enumerate(order)}

    # candidate ball positions per template label, ascending id
    base_row = bdist[center_pos]
    cands = []
    for lbl in order:
        if lbl == base:
            cands.append(np.array([center_pos]))
            continue
        need = tdist[base, lbl]
        cands.append(np.nonzero(base_row == need)[0])

    assign = np.full(m, -1, dtype=np.int64)   # template label -> ball position
    used = np.zeros(nb, dtype=bool)
    choice = [0] * m

    k = 0
    while k >= 0:
        lbl = order[k]
        found = False
        cand = cands[k]
        for ci in range(choice[k], len(cand)):
            p = cand[ci]
            if used[p]:
                continue
            ok = True
            for prev in order[:k]:
                if bdist[assign[prev], p] != tdist[prev, lbl]:
                    ok = False
                    break
            if ok:
                choice[k] = ci + 1
                assign[lbl] = p
                used[p] = True
                found = True
                break
        if not found:
            choice[k] = 0
            k -= 1
            if k >= 0:
                lbl = order[k]
                used[assign[lbl]] = False
                assign[lbl] = -1
            continue
        k += 1
        if k == m:
            return assign.copy()
    return None


def match_windows(space, template, candidates):
    """Match a pointed template into candidate balls of the space.

    For each ``(center, radius)`` pair, searches for a distance-preserving
    injection of the template into the ball ``B(center, radius)`` that sends
    the template basepoint to the center.  The lexicographically least image
    sequence (in template label order, ids ascending) is returned as a
    SubsetIsometry; None marks candidates with no match.
    """
    out = []
    for center, radius in candidates:
        ball = space.ball(center, radius)
        bdist = space.pairwise(ball, ball)
        center_pos = int(np.searchsorted(ball, center))
        if center_pos >= len(ball) or ball[center_pos] != center:
            out.append(None)
            continue
        img = _match_backtrack(template.dist, template.base, ball, bdist,
                               center_pos, surjective=False)
        if img is None:
            out.append(None)
        else:
            labels = list(range(template.size))
            out.append(SubsetIsometry(tuple(labels),
                                      tuple(int(ball[p]) for p in img)))
    return out


def ball_template(space, center, radius):
    """Canonical pointed template of a ball, with the matched id list.

    Points are labeled deterministically: ascending distance from the center,
    then by sorted distance profile within the ball, then by id.  Label 0 is
    the center.
    """
    ball = space.ball(center, radius)
    bdist = space.pairwise(ball, ball)
    center_pos = int(np.searchsorted(ball, center))
    profiles = [tuple(sorted(bdist[i].tolist())) for i in range(len(ball))]
    keys = [(int(bdist[center_pos, i]), profiles[i], int(ball[i]))
            for i in range(len(ball))]
    order = sorted(range(len(ball)), key=lambda i: keys[i])
    tdist = bdist[np.ix_(order, order)]
    ids = [int(ball[i]) for i in order]
    return Template(tdist, base=0), ids


def match_ball_exact(space, template, center, radius):
    """Pointed bijective isometry template -> B(center, radius), or None."""
    ball = space.ball(center, radius)
    if len(ball) != template.size:
        return None
    bdist = space.pairwise(ball, ball)
    center_pos = int(np.searchsorted(ball, center))
    img = _match_backtrack(template.dist, template.base, ball, bdist,
                           center_pos, surjective=True)
    if img is None:
        return None
    return [int(ball[p]) for p in img]


def pointed_isometric(t1, t2):
    """Whether two pointed templates are isometric (basepoint to basepoint)."""
    if t1.size != t2.size:
        return False
    if t1.signature() != t2.signature():
        return False
    img = _match_backtrack(t1.dist, t1.base, np.arange(t2.size), t2.dist,
                           t2.base, surjective=True)
    return img is not None


def pointed_isometry_map(t1, t2):
    """Label map realizing a pointed isometry t1 -> t2 (lex least), or None."""
    if t1.size != t2.size:
        return None
    img = _match_backtrack(t1.dist, t1.base, np.arange(t2.size), t2.dist,
                           t2.base, surjective=True)
    return None if img is None else [int(v) for v in img]
