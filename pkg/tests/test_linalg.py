import numpy as np
import pytest

from hilbfs import (
    DefinitenessError,
    DimensionError,
    HermitianDefectError,
    HermitianForm,
    cholesky_lower,
    matrix_norms,
    orthonormalize_sections,
)
from hilbfs.linalg import dump_matrix_json, load_matrix_json, random_spd, random_unitary


class TestMatrixNorms:
    def test_diag_2_1(self):
        op, hs, mx = matrix_norms(np.diag([2.0, 1.0]))
        assert op == pytest.approx(2.0, abs=1e-14)
        assert hs == pytest.approx(np.sqrt(5.0), abs=1e-14)
        assert mx == 2.0

    def test_identity_3(self):
        op, hs, mx = matrix_norms(np.eye(3))
        assert op == pytest.approx(1.0, abs=1e-14)
        assert hs == pytest.approx(np.sqrt(3.0), abs=1e-14)
        assert mx == 1.0

    def test_offdiag_eps(self):
        eps = 1e-7
        op, hs, mx = matrix_norms(np.array([[0.0, eps], [eps, 0.0]]))
        # characteristic polynomial lambda^2 = eps^2
        assert op == pytest.approx(eps, rel=1e-12)
        assert hs == pytest.approx(np.sqrt(2.0) * eps, rel=1e-12)
        assert mx == eps

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            matrix_norms(np.ones((2, 3)))

    def test_chain_on_random_matrices(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            op, hs, mx = matrix_norms(m)
            assert op <= hs * (1 + 1e-13)
            assert hs <= n * mx * (1 + 1e-13)

    def test_non_hermitian_uses_singular_values(self):
        m = np.array([[0.0, 1.0], [0.0, 0.0]])  # nilpotent: eigenvalues 0, op 1
        assert matrix_norms(m).op == pytest.approx(1.0, abs=1e-14)


class TestHermitianForm:
    def test_small_defect_symmetrised(self):
        a = np.array([[1.0, 0.5 + 1e-14j], [0.5 - 3e-14j, 2.0]])
        h = HermitianForm(a)
        assert np.abs(h.mat - h.mat.conj().T).max() == 0.0

    def test_large_defect_rejected_with_indices(self):
        a = np.array([[1.0, 0.5], [0.7, 2.0]])
        with pytest.raises(HermitianDefectError) as err:
            HermitianForm(a)
        assert err.value.indices in {(0, 1), (1, 0)}

    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        h = random_spd(4, rng, cond=50.0)
        path = tmp_path / "h.json"
        dump_matrix_json(h, path)
        h2 = load_matrix_json(path)
        assert np.array_equal(h.mat, h2.mat)


class TestCholesky:
    def test_identity(self):
        L = cholesky_lower(HermitianForm.identity(3))
        assert np.allclose(L, np.eye(3))

    def test_diag(self):
        L = cholesky_lower(HermitianForm.diagonal([4.0, 9.0]))
        assert np.allclose(L, np.diag([2.0, 3.0]))

    def test_round_trip_random(self):
        rng = np.random.default_rng(7)
        for cond in [10.0, 1e4, 1e8]:
            h = random_spd(6, rng, cond=cond)
            L = cholesky_lower(h)
            scale = np.abs(h.mat).max()
            assert np.abs(L @ L.conj().T - h.mat).max() <= 1e-12 * scale
            assert np.all(np.diagonal(L).real > 0)

    def test_failing_pivot_named(self):
        h = HermitianForm(np.diag([1.0, -1.0, 2.0]))
        with pytest.raises(DefinitenessError) as err:
            cholesky_lower(h)
        assert err.value.pivot == 1


class TestOrthonormalize:
    def test_identity_leaves_rows(self):
        rng = np.random.default_rng(1)
        raw = rng.standard_normal((3, 11)) + 1j * rng.standard_normal((3, 11))
        out = orthonormalize_sections(HermitianForm.identity(3), raw)
        assert np.allclose(out, raw)

    def test_diagonal_scaling(self):
        raw = np.ones((2, 5), dtype=complex)
        raw[1] *= 2.0
        out = orthonormalize_sections(HermitianForm.diagonal([4.0, 1.0]), raw)
        assert np.allclose(out[0], raw[0] / 2.0)
        assert np.allclose(out[1], raw[1])

    def test_gram_oracle(self):
        # quadrature Gram of the orthonormalised rows is the identity
        from hilbfs import build_p1_model

        model = build_p1_model(3)
        rng = np.random.default_rng(5)
        h = random_spd(model.N, rng, cond=30.0)
        gram_raw = np.einsum(
            "iq,jq,q->ij",
            model.sections,
            model.sections.conj(),
            model.ref_weight * model.quad_weights,
        )
        # h is an abstract form; build the matching geometric situation:
        # rows orthonormalised against the *quadrature* Gram of the model
        g_form = HermitianForm(gram_raw)
        rows = orthonormalize_sections(g_form, model.sections)
        gram = np.einsum(
            "iq,jq,q->ij", rows, rows.conj(), model.ref_weight * model.quad_weights
        )
        assert np.abs(gram - np.eye(model.N)).max() <= 1e-9

    def test_pointwise_sum_invariant_under_unitary(self):
        from hilbfs import build_p1_model

        model = build_p1_model(2)
        rng = np.random.default_rng(9)
        h = random_spd(model.N, rng, cond=20.0)
        u = random_unitary(model.N, rng)
        rows1 = orthonormalize_sections(h, model.sections)
        h_rot = HermitianForm(u @ h.mat @ u.conj().T)
        rows2 = orthonormalize_sections(h_rot, u @ model.sections)
        s1 = np.einsum("iq,iq->q", rows1, rows1.conj()).real
        s2 = np.einsum("iq,iq->q", rows2, rows2.conj()).real
        assert np.abs(s1 - s2).max() <= 1e-12 * s1.max()

    def test_row_count_checked(self):
        with pytest.raises(DimensionError):
            orthonormalize_sections(HermitianForm.identity(3), np.ones((2, 4)))
