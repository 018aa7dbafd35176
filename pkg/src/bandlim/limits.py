"""Window extraction of limit operators along directions to infinity.

A Direction is an explicit basepoint sequence walking out of the window, the
computable stand-in for a boundary point at infinity.  ``limit_space`` checks
that the pointed balls around the tail basepoints stabilize to one isometry
class and returns the common template; ``limit_operator`` pulls the operator
entries back through the matched windows, certifies that they form a Cauchy
family within the requested tolerance, and averages the stabilized tail into
a LimitWindow.  ``shift_limit`` is the group-structured shortcut that
translates windows to the origin instead of matching them, and must agree
with the matching route.  ``sample_spectrum`` and ``ghost_profile`` provide
the sampled operator-spectrum summary and the vanishing-entry diagnostic.
"""

from dataclasses import dataclass, field

import numpy as np

from .space import (
    Space, SpaceError, Template, build_space, ball_template, match_ball_exact,
    pointed_isometric,
)
from .operators import (
    BandOperator, OperatorError, from_triplets, schur_bound, _block_norms,
)
from .lowernorm import nu
from .serialize import round15


class ExtractError(ValueError):
    """Raised when a direction does not admit a stable extraction."""


class CauchyFailure(ExtractError):
    """Window matrices keep moving beyond the tolerance; carries the profile."""

    def __init__(self, message, profile):
        super().__init__(message)
        self.profile = profile      # list of (basepoint, deviation)


@dataclass
class Direction:
    """Basepoint sequence heading to infinity, with a readable label."""

    basepoints: list
    label: str = "dir"

    def validate(self, space):
        if not self.basepoints:
            raise ExtractError("direction has no basepoints")
        row = space.row(space.center)
        dists = [int(row[b]) for b in self.basepoints]
        if any(b < a for a, b in zip(dists, dists[1:])):
            raise ExtractError("direction must march away from the center")
        if len(set(self.basepoints)) != len(self.basepoints):
            raise ExtractError("direction repeats a basepoint")

    def usable(self, space, margin):
        """Basepoints with window margin at least ``margin``, in order."""
        return [b for b in self.basepoints if space.margin(b) >= margin]

    @classmethod
    def arithmetic(cls, space, start, step, label=None):
        """1-d lattice rule: coordinates start, start+step, ... while inside."""
        pts = []
        c = start
        while True:
            pid = space.lattice_id([c])
            if pid is None:
                break
            pts.append(pid)
            c += step
        return cls(pts, label or f"arith:{start},{step}")

    @classmethod
    def geometric(cls, space, start, ratio, label=None):
        pts, seen = [], set()
        c = float(start)
        while True:
            pid = space.lattice_id([int(np.floor(c))])
            if pid is None:
                break
            if pid not in seen:
                pts.append(pid)
                seen.add(pid)
            c *= ratio
        return cls(pts, label or f"geo:{start},{ratio}")

    @classmethod
    def ray(cls, space, start, step, label=None):
        """Lattice ray: coordinates start + n * step while inside the window."""
        pts = []
        c = np.asarray(start, dtype=np.int64)
        step = np.asarray(step, dtype=np.int64)
        while True:
            pid = space.lattice_id(c)
            if pid is None:
                break
            pts.append(pid)
            c = c + step
        return cls(pts, label or f"ray:{tuple(start)},{tuple(step)}")

    @classmethod
    def components(cls, space, residue=0, label=None):
        """Box-space rule: the point with a fixed residue in each component."""
        ci, res, mod = space.components
        pts = []
        for comp in sorted(set(int(c) for c in ci)):
            ids = np.nonzero((ci == comp) & (res == residue % mod[ci == comp][0]))[0]
            if len(ids):
                pts.append(int(ids[0]))
        return cls(pts, label or f"components:{residue}")

    @classmethod
    def from_rule(cls, space, rule):
        """Parse a CLI rule: 'x0,step', 'geo:x0,ratio', 'ray:x0,y0,dx,dy',
        or 'components:residue'."""
        if rule.startswith("geo:"):
            a, r = rule[4:].split(",")
            return cls.geometric(space, float(a), float(r), label=rule)
        if rule.startswith("ray:"):
            nums = [int(v) for v in rule[4:].split(",")]
            d = len(nums) // 2
            return cls.ray(space, nums[:d], nums[d:], label=rule)
        if rule.startswith("components:"):
            return cls.components(space, int(rule.split(":")[1]), label=rule)
        a, s = rule.split(",")
        return cls.arithmetic(space, int(a), int(s), label=rule)


@dataclass
class DivergenceReport:
    """Distinct pointed isometry classes seen along a direction."""

    classes: list              # (Template, [basepoint ids]) pairs
    radius: int
    label: str

    @property
    def diverged(self):
        return True

    def summary(self):
        return {
            "diverged": True,
            "radius": int(self.radius),
            "direction": self.label,
            "class_sizes": [len(members) for _, members in self.classes],
        }


@dataclass
class LimitSpaceResult:
    """Stabilized ball template with per-basepoint matchings."""

    template: Template
    basepoints: list           # usable basepoints, in direction order
    stabilized_from: int       # index into basepoints where the class settles
    matchings: dict            # basepoint -> id list aligned with labels

    @property
    def diverged(self):
        return False


def limit_space(space, direction, R, tol_count=5):
    """Stabilized pointed ball template along a direction, radius R.

    The last ``tol_count`` usable basepoints must carry pairwise pointed
    isometric balls; otherwise a DivergenceReport lists the classes seen.
    Basepoints with margin below R violate the precondition and raise.
    """
    direction.validate(space)
    bad = [b for b in direction.basepoints if space.margin(b) < R]
    usable = direction.usable(space, R)
    if not usable:
        raise ExtractError(
            f"no basepoint of {direction.label!r} has margin {R}")
    if bad and len(usable) < tol_count:
        raise ExtractError(
            f"margin violation: basepoints {bad[:5]} sit within {R} of the "
            f"window boundary")

    templates = []
    for b in usable:
        t, ids = ball_template(space, b, R)
        templates.append((b, t, ids))

    # walk back from the end while consecutive balls stay pointed isometric
    i0 = len(usable) - 1
    while i0 > 0 and pointed_isometric(templates[i0 - 1][1], templates[i0][1]):
        i0 -= 1
    stable_count = len(usable) - i0
    if stable_count < min(tol_count, len(usable)):
        classes = []
        for b, t, _ in templates:
            for ct, members in classes:
                if pointed_isometric(ct, t):
                    members.append(b)
                    break
            else:
                classes.append((t, [b]))
        return DivergenceReport(classes=[(t, m) for t, m in classes],
                                radius=int(R), label=direction.label)

    base_b, template, base_ids = templates[i0]
    matchings = {base_b: base_ids}
    for b, t, _ in templates[i0 + 1:]:
        ids = match_ball_exact(space, template, b, R)
        if ids is None:
            raise ExtractError(
                f"internal matching failure at basepoint {b}")
        matchings[b] = ids
    return LimitSpaceResult(template=template, basepoints=usable,
                            stabilized_from=i0, matchings=matchings)


@dataclass
class LimitWindow:
    """Extracted limit operator on a ball template, with its certificate."""

    template: Template
    matrix: np.ndarray          # (m*k, m*k) complex, unfolded blocks
    radius: int
    cauchy_tail: float
    stabilized_from: int        # index into the usable basepoint list
    tol: float
    direction_label: str
    basepoints_used: list
    block_dim: int = 1
    p: float = 2.0
    deviation_profile: list = field(default_factory=list)
    norm_check: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.template.size

    def entry(self, i, j):
        k = self.block_dim
        return self.matrix[i * k:(i + 1) * k, j * k:(j + 1) * k]

    def propagation(self):
        k = self.block_dim
        out = 0
        for i in range(self.size):
            for j in range(self.size):
                if np.any(self.entry(i, j) != 0):
                    out = max(out, int(self.template.dist[i, j]))
        return out

    def as_operator(self):
        """Materialize the window as (explicit Space, BandOperator)."""
        sp = build_space({"kind": "explicit", "name": "window",
                          "matrix": self.template.dist.tolist(), "center": 0})
        trip = []
        for i in range(self.size):
            for j in range(self.size):
                b = self.entry(i, j)
                if np.any(b != 0):
                    trip.append((i, j, b if self.block_dim > 1 else b[0, 0]))
        return sp, from_triplets(sp, trip, block_dim=self.block_dim, p=self.p)

    def to_json(self):
        k = self.block_dim
        trip = []
        for i in range(self.size):
            for j in range(self.size):
                b = self.entry(i, j)
                if np.any(b != 0):
                    flat = []
                    for bi in range(k):
                        for bj in range(k):
                            flat.extend([round15(b[bi, bj].real),
                                         round15(b[bi, bj].imag)])
                    trip.append([int(i), int(j)] + flat)
        return {
            "template": self.template.to_json(),
            "matrix": trip,
            "radius": int(self.radius),
            "cauchy_tail": round15(self.cauchy_tail),
            "stabilized_from": int(self.stabilized_from),
            "tol": round15(self.tol),
            "direction": self.direction_label,
            "basepoints_used": [int(b) for b in self.basepoints_used],
            "block_dim": int(k),
            "p": round15(self.p),
            "norm_check": {key: round15(v) for key, v in self.norm_check.items()},
            "propagation": int(self.propagation()),
        }


def _certify_windows(windows, tol, tail):
    """Longest admissible suffix of windows with pairwise deviation <= tol.

    Returns (start index, averaged matrix, deviation over the suffix).  The
    average is skipped when the suffix is bitwise constant, so exactly
    stabilized extractions come out exact.
    """
    count = len(windows)
    need = min(tail, count)
    # deviation of each window from the last one, for reporting
    profile = [float(np.max(np.abs(w - windows[-1]))) if w.size else 0.0
               for w in windows]

    def suffix_dev(s):
        dev = 0.0
        for i in range(s, count):
            for j in range(i + 1, count):
                dev = max(dev, float(np.max(np.abs(windows[i] - windows[j])))
                          if windows[i].size else 0.0)
        return dev

    best = None
    for s in range(0, count - need + 1):
        dev = suffix_dev(s)
        if dev <= tol:
            best = (s, dev)
            break
    if best is None:
        s = count - need
        raise CauchyFailure(
            f"window matrices deviate by {suffix_dev(s):.3e} over the last "
            f"{need} basepoints (tolerance {tol:.3e})", profile)
    s, dev = best
    tailw = windows[s:]
    if all(np.array_equal(tailw[0], w) for w in tailw[1:]):
        avg = tailw[0].copy()
    else:
        avg = np.mean(np.stack(tailw), axis=0)
    return s, avg, dev, profile


def _window_matrix(A, ids):
    """Unfolded matrix of A compressed to the listed points, in that order."""
    k = A.block_dim
    m = len(ids)
    out = np.zeros((m * k, m * k), dtype=np.complex128)
    index = A.entry_index()
    pos = {int(x): i for i, x in enumerate(ids)}
    for (x, y), e in index.items():
        i = pos.get(x)
        j = pos.get(y)
        if i is not None and j is not None:
            out[i * k:(i + 1) * k, j * k:(j + 1) * k] = A.blocks[e]
    return out


def default_radius(A):
    return 3 * A.propagation + 2


def limit_operator(A, direction, R=None, tol=1e-9, tail=5):
    """Limit window of A along a direction, radius R.

    The ball geometry must stabilize at radius R + prop(A); the pulled-back
    matrices over the stabilized tail must agree within tol (their spread is
    the certificate ``cauchy_tail``).  Divergent geometry or moving matrices
    raise, reporting what was seen; this mirrors the need to pass to a
    subsequence for operators without entrywise limits along the direction.
    """
    if R is None:
        R = default_radius(A)
    space = A.space
    R_metric = R + A.propagation
    ls = limit_space(space, direction, R_metric, tol_count=tail)
    if ls.diverged:
        raise ExtractError(
            f"ball geometry along {direction.label!r} does not stabilize at "
            f"radius {R_metric}: {ls.summary()['class_sizes']} classes seen")

    # restrict the stabilized template to radius R around the basepoint
    keep = [i for i in range(ls.template.size)
            if ls.template.dist[ls.template.base, i] <= R]
    sub_dist = ls.template.dist[np.ix_(keep, keep)]
    template = Template(sub_dist, base=0)

    used = ls.basepoints[ls.stabilized_from:]
    windows = []
    for b in used:
        ids = [ls.matchings[b][i] for i in keep]
        windows.append(_window_matrix(A, ids))
    s, avg, dev, profile = _certify_windows(windows, tol, tail)

    bound = schur_bound(A, 2.0)
    wnorm = float(np.linalg.norm(avg, 2)) if avg.size else 0.0
    win = LimitWindow(
        template=template, matrix=avg, radius=int(R), cauchy_tail=float(dev),
        stabilized_from=int(ls.stabilized_from + s), tol=float(tol),
        direction_label=direction.label,
        basepoints_used=[int(b) for b in used[s:]],
        block_dim=A.block_dim, p=A.p,
        deviation_profile=[(int(b), float(d)) for b, d in zip(used, profile)],
        norm_check={"window_norm2": wnorm, "operator_bound": float(bound)},
    )
    return win


def shift_limit(A, direction, R=None, tol=1e-9, tail=5):
    """Limit window via group translations (group-structured spaces only).

    Windows around the basepoints are translated back to the identity using
    the group offsets instead of isometry matching; the result must agree
    with ``limit_operator`` through the canonical matching within 2 tol.
    """
    space = A.space
    if not space.group_structured:
        raise ExtractError("space carries no group structure")
    if R is None:
        R = default_radius(A)
    direction.validate(space)
    usable = direction.usable(space, R)
    if not usable:
        raise ExtractError(
            f"no basepoint of {direction.label!r} has margin {R}")
    offsets = space.group_offsets(R)
    tdist = np.array([[space.group_offset_dist(a, b) for b in offsets]
                      for a in offsets], dtype=np.int64)
    keep = [i for i, off in enumerate(offsets) if tdist[0, i] <= R]
    offsets = [offsets[i] for i in keep]
    tdist = tdist[np.ix_(keep, keep)]
    template = Template(tdist, base=0, labels=[str(o) for o in offsets])

    windows = []
    for b in usable:
        ids = [space.offset_point(b, off) for off in offsets]
        if any(i is None for i in ids):
            raise ExtractError(f"basepoint {b} cannot host radius {R} offsets")
        windows.append(_window_matrix(A, ids))
    s, avg, dev, profile = _certify_windows(windows, tol, tail)
    wnorm = float(np.linalg.norm(avg, 2)) if avg.size else 0.0
    return LimitWindow(
        template=template, matrix=avg, radius=int(R), cauchy_tail=float(dev),
        stabilized_from=int(s), tol=float(tol),
        direction_label=direction.label,
        basepoints_used=[int(b) for b in usable[s:]],
        block_dim=A.block_dim, p=A.p,
        deviation_profile=[(int(b), float(d)) for b, d in zip(usable, profile)],
        norm_check={"window_norm2": wnorm,
                    "operator_bound": float(schur_bound(A, 2.0))},
    )


def _all_pointed_isometries(t1, t2, cap=256):
    """All pointed isometries t1 -> t2 as label maps (bounded enumeration)."""
    if t1.size != t2.size:
        return []
    m = t1.size
    out = []

    def recurse(assign, used):
        if len(out) >= cap:
            return
        k = len(assign)
        if k == m:
            out.append(list(assign))
            return
        for p in range(m):
            if used[p]:
                continue
            if t2.dist[t2.base, p] != t1.dist[t1.base, k] and k != t1.base:
                continue
            if k == t1.base and p != t2.base:
                continue
            ok = all(t2.dist[assign[j], p] == t1.dist[j, k] for j in range(k))
            if ok:
                assign.append(p)
                used[p] = True
                recurse(assign, used)
                assign.pop()
                used[p] = False

    recurse([], np.zeros(m, dtype=bool))
    return out


def window_deviation(w1: LimitWindow, w2: LimitWindow):
    """Smallest max-entry deviation between two windows over pointed matchings."""
    isos = _all_pointed_isometries(w1.template, w2.template)
    if not isos:
        return np.inf
    k = w1.block_dim
    best = np.inf
    for iso in isos:
        perm = np.zeros(w1.size * k, dtype=np.int64)
        for i, p in enumerate(iso):
            perm[i * k:(i + 1) * k] = np.arange(p * k, (p + 1) * k)
        dev = float(np.max(np.abs(w1.matrix - w2.matrix[np.ix_(perm, perm)])))
        best = min(best, dev)
    return best


def interior_nu(window: LimitWindow, p=2.0, margin=None):
    """Lower norm of the window restricted to interior template columns."""
    if margin is None:
        margin = window.propagation()
    base_row = window.template.dist[window.template.base]
    F = [i for i in range(window.size)
         if base_row[i] <= window.radius - margin]
    if not F:
        F = list(range(window.size))
    sp, op = window.as_operator()
    return nu(op, F, p=p)


def window_operator(window: LimitWindow):
    return window.as_operator()


def sample_spectrum(A, dirs, R=None, tol=1e-9, p=2.0, tail=5):
    """Limit windows along several directions plus a min-lower-norm summary.

    The summary is a sample, never a sweep of every direction to infinity;
    failed extractions are reported per direction and do not abort the rest.
    """
    if not dirs:
        raise ExtractError("sample_spectrum needs at least one direction")
    windows = {}
    failures = {}
    for d in dirs:
        try:
            windows[d.label] = limit_operator(A, d, R=R, tol=tol, tail=tail)
        except (ExtractError, SpaceError, OperatorError) as exc:
            failures[d.label] = str(exc)
    if not windows:
        raise ExtractError(f"all directions failed: {failures}")
    min_nu, argmin = None, None
    for label in sorted(windows):
        rep = interior_nu(windows[label], p=p)
        if min_nu is None or rep.value < min_nu:
            min_nu, argmin = rep.value, label
    summary = {
        "min_interior_nu": float(min_nu),
        "argmin_direction": argmin,
        "note": "sampled, not exhaustive",
        "failures": failures,
    }
    return windows, summary


def ghost_profile(A, radii):
    """Sup entry norm outside F x F for F the balls around the center.

    A profile decreasing to zero is the desk-scale ghost signature: every
    sampled limit window of such an operator is entrywise small.
    """
    space = A.space
    crow = space.row(space.center)
    if A.nnz == 0:
        return [(float(r), 0.0) for r in radii]
    norms = _block_norms(A.blocks)
    out = []
    for r in radii:
        outside = (crow[A.rows] > r) | (crow[A.cols] > r)
        val = float(norms[outside].max()) if outside.any() else 0.0
        out.append((float(r), val))
    return out
