import numpy as np
import pytest

from bandlim.space import build_space
from bandlim.operators import (
    OperatorError, Vector, from_triplets, identity, multiplier,
    partial_translation_operator, compose, add, scale, subtract, adjoint,
    apply_operator, decompose, three_color, schur_bound, norm2,
    save_operator, load_operator,
)

from conftest import random_band, shift_operator, tridiagonal


class TestConstruction:
    def test_identity_metadata(self, nat_window):
        A = identity(nat_window)
        assert A.propagation == 0
        assert A.entry_sup == 1.0

    def test_shift_propagation(self, nat_window):
        S = shift_operator(nat_window)
        assert S.propagation == 1
        assert S.nnz == nat_window.n - 1

    def test_tridiagonal(self, nat_window):
        T = tridiagonal(nat_window)
        assert T.propagation == 1
        assert T.entry_sup == 1.0

    def test_duplicate_entry_rejected(self, nat_window):
        with pytest.raises(OperatorError, match="duplicate"):
            from_triplets(nat_window, [(0, 0, 1.0), (0, 0, 2.0)])

    def test_bad_index_rejected(self, nat_window):
        with pytest.raises(OperatorError, match="outside"):
            from_triplets(nat_window, [(0, 999, 1.0)])


class TestAlgebra:
    def test_shift_adjoint_identity_on_interior(self, z_window):
        S = shift_operator(z_window)
        P = compose(S, adjoint(S))
        D = P.to_dense()
        # S S* is the identity except at the column that fell off the window
        assert np.allclose(np.diag(D)[1:], 1.0)
        assert D[0, 0] == 0

    def test_compose_with_zero(self, nat_window):
        A = tridiagonal(nat_window)
        Z = from_triplets(nat_window, [])
        assert compose(A, Z).nnz == 0

    def test_tridiagonal_square_matches_dense(self, nat_window):
        T = tridiagonal(nat_window)
        P = compose(T, T)
        assert P.propagation == 2
        assert np.allclose(P.to_dense(), T.to_dense() @ T.to_dense(), atol=0)

    def test_propagation_subadditive_random(self, quad_window):
        rng = np.random.default_rng(3)
        for _ in range(10):
            A = random_band(quad_window, 2, rng)
            B = random_band(quad_window, 1, rng)
            assert compose(A, B).propagation <= A.propagation + B.propagation

    def test_add_scale_subtract(self, nat_window):
        rng = np.random.default_rng(5)
        A = random_band(nat_window, 1, rng)
        B = random_band(nat_window, 2, rng)
        assert np.allclose(add(A, B).to_dense(), A.to_dense() + B.to_dense())
        assert np.allclose(scale(A, 2j).to_dense(), 2j * A.to_dense())
        assert subtract(A, A).nnz == 0


class TestApply:
    def test_identity_action(self, nat_window):
        v = Vector.basis(nat_window, 7)
        w = apply_operator(identity(nat_window), v)
        assert np.array_equal(w.values, v.values)

    def test_shift_moves_basis(self, nat_window):
        S = shift_operator(nat_window)
        w = apply_operator(S, Vector.basis(nat_window, 3))
        assert w.values[4, 0] == 1.0 and w.norm() == 1.0

    def test_against_dense_oracle(self):
        sp = build_space({"kind": "n-window", "upper": 119, "name": "n120"})
        rng = np.random.default_rng(11)
        for _ in range(20):
            A = random_band(sp, 2, rng)
            v = Vector(sp, rng.standard_normal(sp.n) + 1j * rng.standard_normal(sp.n))
            w = apply_operator(A, v)
            oracle = A.to_dense() @ v.flat()
            assert np.max(np.abs(w.flat() - oracle)) <= 1e-12

    def test_block_apply_matches_dense(self, quad_window):
        rng = np.random.default_rng(13)
        A = random_band(quad_window, 1, rng, block_dim=2)
        v = Vector(quad_window,
                   rng.standard_normal((quad_window.n, 2))
                   + 1j * rng.standard_normal((quad_window.n, 2)), block_dim=2)
        w = apply_operator(A, v)
        oracle = A.to_dense() @ v.flat()
        assert np.max(np.abs(w.flat() - oracle)) <= 1e-12

    def test_schur_bound_controls_apply(self, nat_window):
        rng = np.random.default_rng(17)
        for p in (1.5, 2.0, 3.0):
            A = random_band(nat_window, 2, rng)
            bound = schur_bound(A, p)
            for _ in range(5):
                v = Vector(nat_window,
                           rng.standard_normal(nat_window.n), p=p)
                assert apply_operator(A, v).norm() <= bound * v.norm() + 1e-9


class TestDecompose:
    def test_identity_single_summand(self, nat_window):
        dec = decompose(identity(nat_window))
        assert len(dec) == 1
        assert dec.reconstruct() == identity(nat_window)

    def test_tridiagonal_at_most_three(self, z_window):
        T = tridiagonal(z_window)
        dec = decompose(T)
        assert len(dec) <= z_window.growth(1) == 3
        assert dec.reconstruct() == T

    def test_random_quadrant_exact(self, quad_window):
        rng = np.random.default_rng(23)
        A = random_band(quad_window, 2, rng)
        dec = decompose(A)
        assert dec.reconstruct() == A

    def test_invariants_random(self, quad_window):
        rng = np.random.default_rng(29)
        for _ in range(60):
            prop = int(rng.integers(0, 4))
            A = random_band(quad_window, prop, rng, density=0.4)
            dec = decompose(A)
            assert dec.reconstruct() == A
            assert len(dec) <= quad_window.growth(A.propagation)
            assert all(s <= A.entry_sup + 1e-12 for s in dec.multiplier_sups())
            assert all(t.displacement <= A.propagation for t in dec.translations)

    def test_summands_rebuild(self, nat_window):
        rng = np.random.default_rng(31)
        A = random_band(nat_window, 1, rng)
        total = from_triplets(nat_window, [])
        for s in decompose(A).summands():
            total = add(total, s)
        assert np.allclose(total.to_dense(), A.to_dense(), atol=0)

    def test_block_decompose(self, nat_window):
        rng = np.random.default_rng(37)
        A = random_band(nat_window, 1, rng, block_dim=2)
        assert decompose(A).reconstruct() == A


def check_three_coloring(classes, s, t):
    for cl in classes:
        s_img = {s[a] for a in cl}
        t_img = {t[a] for a in cl}
        assert not (s_img & t_img)


class TestThreeColor:
    def test_three_cycle_needs_three_classes(self):
        s = {1: 1, 2: 2, 3: 3}
        t = {1: 2, 2: 3, 3: 1}
        classes = three_color([1, 2, 3], s, t)
        assert all(len(cl) > 0 for cl in classes)
        assert sorted(sum(classes, [])) == [1, 2, 3]
        check_three_coloring(classes, s, t)

    def test_involution_needs_two(self):
        s = {a: a for a in range(4)}
        t = {0: 1, 1: 0, 2: 3, 3: 2}
        classes = three_color(range(4), s, t)
        assert classes[2] == []
        check_three_coloring(classes, s, t)

    def test_random_derangement(self):
        rng = np.random.default_rng(41)
        n = 100
        while True:
            perm = rng.permutation(n)
            if np.all(perm != np.arange(n)):
                break
        s = {a: a for a in range(n)}
        t = {a: int(perm[a]) for a in range(n)}
        classes = three_color(range(n), s, t)
        assert sorted(sum(classes, [])) == list(range(n))
        check_three_coloring(classes, s, t)

    def test_agreement_reported_with_witness(self):
        s = {1: 5, 2: 6}
        t = {1: 5, 2: 6}
        with pytest.raises(OperatorError, match="agree at index 1"):
            three_color([1, 2], s, t)


class TestNorms:
    def test_schur_identity(self, nat_window):
        assert schur_bound(identity(nat_window)) == 1.0

    def test_schur_tridiagonal(self, nat_window):
        T = tridiagonal(nat_window)
        assert schur_bound(T, 2.0) == 2.0
        assert norm2(T) < 2.0

    def test_schur_shift(self, nat_window):
        assert schur_bound(shift_operator(nat_window)) == 1.0

    def test_norm2_identity(self, nat_window):
        assert abs(norm2(identity(nat_window)) - 1.0) < 1e-12

    def test_norm2_tridiagonal_spectrum(self):
        sp = build_space({"kind": "n-window", "upper": 99, "name": "n100"})
        T = tridiagonal(sp)
        expected = np.abs(np.linalg.eigvalsh(T.to_dense().real)).max()
        assert abs(expected - 2 * np.cos(np.pi / 101)) < 1e-12
        assert abs(norm2(T, method="power") - expected) < 1e-7
        assert abs(norm2(T, method="dense") - expected) < 1e-12

    def test_norm2_rank_one(self, nat_window):
        A = from_triplets(nat_window, [(0, 0, 1.0)])
        assert abs(norm2(A) - 1.0) < 1e-12

    def test_norm2_zero(self, nat_window):
        assert norm2(from_triplets(nat_window, [])) == 0.0

    def test_norm2_nonconvergence_raises(self, nat_window):
        T = tridiagonal(nat_window)
        with pytest.raises(OperatorError, match="converge"):
            norm2(T, method="power", max_iter=2)

    def test_norm2_below_schur_random(self, quad_window):
        rng = np.random.default_rng(43)
        for _ in range(10):
            A = random_band(quad_window, 1, rng)
            assert norm2(A) <= schur_bound(A, 2.0) + 1e-9


class TestFiles:
    def test_round_trip_exact(self, tmp_path, nat_window):
        rng = np.random.default_rng(47)
        A = random_band(nat_window, 2, rng)
        path = tmp_path / "op.bop"
        save_operator(path, A)
        B = load_operator(path, nat_window)
        assert B == A

    def test_block_round_trip(self, tmp_path, quad_window):
        rng = np.random.default_rng(53)
        A = random_band(quad_window, 1, rng, block_dim=3)
        path = tmp_path / "op.bop"
        save_operator(path, A)
        assert load_operator(path, quad_window) == A

    def test_space_name_checked(self, tmp_path, nat_window, z_window):
        path = tmp_path / "op.bop"
        save_operator(path, identity(nat_window))
        with pytest.raises(OperatorError, match="expects space"):
            load_operator(path, z_window)


class TestPartialTranslationOperator:
    def test_from_translation(self, z_window):
        from bandlim.space import right_translations
        [t] = right_translations(z_window, offsets=[(1,)])
        V = partial_translation_operator(z_window, t)
        assert V.propagation == 1
        w = apply_operator(V, Vector.basis(z_window, 0))
        assert w.values[1, 0] == 1.0

    def test_multiplier_diagonal(self, nat_window):
        f = multiplier(nat_window, lambda x: float(x % 2))
        assert f.propagation == 0
        assert f.nnz == nat_window.n // 2
