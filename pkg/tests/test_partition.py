import numpy as np
import pytest

from bandlim.space import build_space
from bandlim.operators import (
    identity, multiplier, subtract, scale, norm2, schur_bound, apply_operator,
    Vector,
)
from bandlim.partition import (
    SparsifyShortfall, BlockSparsifierModel, sparsify, make_partition,
    average, weighted_sum,
)

from conftest import random_band, tridiagonal


def interval(n, name):
    return build_space({"kind": "n-window", "upper": n - 1, "name": name})


def check_sparsification(space, sp):
    seen = set()
    for part in sp.parts:
        assert part == sorted(part)
        assert not (set(part) & seen)
        seen |= set(part)
        ids = np.asarray(part)
        if len(ids) > 1:
            assert space.pairwise(ids, ids).max() <= sp.diameter_bound
    for i in range(len(sp.parts)):
        for j in range(i + 1, len(sp.parts)):
            a, b = np.asarray(sp.parts[i]), np.asarray(sp.parts[j])
            assert space.pairwise(a, b).min() >= sp.separation


class TestSparsify:
    def test_interval_block_pattern(self):
        sp = interval(100, "n100")
        res = sparsify(sp, None, m=3, target_c=0.7, block_length=9)
        check_sparsification(sp, res)
        assert res.diameter_bound <= 9
        # oracle: best offset of the keep-9-drop-3 pattern on 100 points
        best = max(sum(1 for x in range(100) if (x - off) % 12 < 9)
                   for off in range(12))
        assert res.mass_fraction == best / 100.0
        assert res.mass_fraction >= 0.7

    def test_single_atom(self):
        sp = build_space({"kind": "graph", "n": 5,
                          "edges": [[0, 1], [1, 2], [2, 3], [3, 4]]})
        mu = np.zeros(5)
        mu[2] = 3.0
        res = sparsify(sp, mu, m=2, target_c=1.0)
        assert res.parts == [[2]]
        assert res.mass_fraction == 1.0

    def test_two_separated_atoms(self):
        sp = build_space({"kind": "graph", "n": 8,
                          "edges": [[i, i + 1] for i in range(7)]})
        mu = np.zeros(8)
        mu[0] = 1.0
        mu[7] = 2.0
        res = sparsify(sp, mu, m=3, target_c=1.0)
        assert res.mass_fraction == 1.0
        assert sorted(x for part in res.parts for x in part) == [0, 7]

    def test_shortfall_reports_best(self):
        sp = interval(30, "n30")
        with pytest.raises(SparsifyShortfall) as exc:
            sparsify(sp, None, m=10, target_c=0.99, block_length=10)
        assert 0 < exc.value.best.mass_fraction < 0.99

    def test_quadrant_blocks(self):
        sp = build_space({"kind": "quadrant", "upper": 15, "name": "q16"})
        res = sparsify(sp, None, m=2, target_c=0.5, block_length=6)
        check_sparsification(sp, res)
        assert res.mass_fraction >= (6 / 8) ** 2 - 1e-12

    def test_model_constants(self):
        model = BlockSparsifierModel()
        assert model.block_length(3) == 9
        assert model.f(4) == 12
        assert model.diameter_for(3, 0.75) == 9
        assert model.diameter_for(3, 0.9) == 27


class TestMakePartition:
    def test_normalization_exact(self):
        sp = interval(60, "n60")
        for p in (1.5, 2.0, 3.0):
            part = make_partition(sp, 10, p=p)
            for x in range(sp.n):
                total = sum(v ** p for v in part.point_funcs[x].values())
                assert abs(total - 1.0) < 1e-12

    def test_variation_shrinks_with_scale(self):
        sp = interval(120, "n120")
        eps5 = make_partition(sp, 5).variation(1)
        eps20 = make_partition(sp, 20).variation(1)
        assert eps20 < eps5

    def test_single_center_constant_function(self):
        sp = interval(8, "n8")
        part = make_partition(sp, 10)
        assert len(part.centers) == 1
        assert all(abs(part.phi(0, x) - 1.0) < 1e-15 for x in range(sp.n))
        assert part.variation(3) == 0.0

    def test_multiplicity_bounded(self):
        sp = interval(100, "n100")
        part = make_partition(sp, 7)
        assert part.multiplicity <= 4
        counts = [len(part.point_funcs[x]) for x in range(sp.n)]
        assert max(counts) == part.multiplicity

    def test_variation_monotone_in_r(self):
        sp = interval(80, "n80")
        part = make_partition(sp, 6)
        vals = [part.variation(r) for r in range(1, 19)]
        assert vals == sorted(vals)

    def test_scale_validation(self):
        sp = interval(10, "n10")
        with pytest.raises(Exception):
            make_partition(sp, 0)


class TestAverage:
    def test_identity_fixed(self):
        sp = interval(40, "n40")
        part = make_partition(sp, 5)
        M = average(identity(sp), part)
        assert np.allclose(M.to_dense(), np.eye(sp.n), atol=1e-12)

    def test_diagonal_fixed_exactly(self):
        sp = interval(40, "n40")
        part = make_partition(sp, 5)
        D = multiplier(sp, lambda x: 1.0 + 0.3 * (x % 4))
        M = average(D, part)
        assert np.allclose(M.to_dense(), D.to_dense(), atol=1e-12)

    def test_tridiagonal_converges_with_scale(self):
        sp = build_space({"kind": "zn-window", "lower": [-100], "upper": [100],
                          "name": "zavg"})
        T = tridiagonal(sp)
        gaps = []
        for L in (5, 10, 20):
            M = average(T, make_partition(sp, L))
            gaps.append(norm2(subtract(M, T)))
        assert gaps[0] > gaps[1] > gaps[2]

    def test_contractive_in_applied_norm(self):
        sp = interval(60, "n60")
        rng = np.random.default_rng(101)
        for p in (1.5, 2.0, 3.0):
            A = random_band(sp, 1, rng)
            part = make_partition(sp, 6, p=p)
            M = average(A, part)
            for _ in range(4):
                v = Vector(sp, rng.standard_normal(sp.n)
                           + 1j * rng.standard_normal(sp.n), p=p)
                lhs = apply_operator(M, v).norm()
                # |M(A)v|_p never exceeds the certified bound of A itself
                assert lhs <= schur_bound(A, p) * v.norm() + 1e-9

    def test_linear(self):
        sp = interval(30, "n30")
        rng = np.random.default_rng(103)
        A = random_band(sp, 1, rng)
        B = random_band(sp, 1, rng)
        part = make_partition(sp, 4)
        from bandlim.operators import add
        lhs = average(add(A, B), part).to_dense()
        rhs = average(A, part).to_dense() + average(B, part).to_dense()
        assert np.allclose(lhs, rhs, atol=1e-13)


class TestWeightedSum:
    def test_identity_locals_plain(self):
        sp = interval(50, "n50")
        part = make_partition(sp, 6)
        I = identity(sp)
        op, bound = weighted_sum(part, lambda i: I, mode="plain", M=1.0)
        assert np.allclose(op.to_dense(), np.eye(sp.n), atol=1e-12)
        assert bound == 1.0

    def test_diagonal_commutator_vanishes(self):
        sp = interval(50, "n50")
        part = make_partition(sp, 6)
        D = multiplier(sp, lambda x: 2.0 + (x % 3))
        I = identity(sp)
        op, bound = weighted_sum(part, lambda i: I, mode="commutator", A=D,
                                 M=1.0)
        assert op.nnz == 0
        assert bound == 0.0

    def test_tridiagonal_commutator_bound(self):
        sp = build_space({"kind": "zn-window", "lower": [-60], "upper": [60],
                          "name": "zws"})
        T = tridiagonal(sp)
        part = make_partition(sp, 8)
        I = identity(sp)
        op, bound = weighted_sum(part, lambda i: I, mode="commutator", A=T,
                                 M=1.0, norm_a=norm2(T))
        eps = part.variation(1)
        assert abs(bound - eps * 3 * norm2(T)) < 1e-12
        assert norm2(op) <= bound + 1e-12

    def test_commutator_bound_random(self):
        sp = interval(60, "n60")
        rng = np.random.default_rng(107)
        for p in (1.5, 2.0, 3.0):
            part = make_partition(sp, 7, p=p)
            A = random_band(sp, 1, rng, density=0.8)
            locals_ = [scale(identity(sp), 0.5) for _ in part.centers]
            op, bound = weighted_sum(part, locals_, mode="commutator", A=A,
                                     M=0.5, norm_a=schur_bound(A, p))
            # empirical p-norm ratios stay under the certified bound
            for _ in range(6):
                v = Vector(sp, rng.standard_normal(sp.n)
                           + 1j * rng.standard_normal(sp.n), p=p)
                assert apply_operator(op, v).norm() <= bound * v.norm() + 1e-9

    def test_missing_bound_rejected(self):
        sp = interval(20, "n20")
        part = make_partition(sp, 4)
        with pytest.raises(Exception, match="bound"):
            weighted_sum(part, lambda i: identity(sp), mode="plain")
