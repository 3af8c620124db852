import numpy as np
import pytest

from wedgetomo.dictlearn import (
    Dictionary,
    accumulate_patches,
    coding_residual_sq,
    extract_patches,
    omp,
    omp_batch,
    patch_adjoint_accumulate,
    patch_count_image,
    train_dictionary,
)


def random_unit_dictionary(rng, n_dim, n_atoms):
    atoms = rng.standard_normal((n_dim, n_atoms))
    return atoms / np.linalg.norm(atoms, axis=0)


class TestExtractPatches:
    def test_whole_image_single_patch(self, rng):
        image = rng.random((8, 8))
        ps = extract_patches(image, 8)
        assert ps.n_patches == 1
        np.testing.assert_array_equal(ps.patches[:, 0], image.ravel())

    def test_stride_one_count(self, phantom121):
        ps = extract_patches(phantom121, 8)
        assert ps.n_patches == 114 * 114 == 12996

    def test_constant_image_identical_patches(self):
        ps = extract_patches(np.full((10, 10), 3.25), 4)
        assert np.ptp(ps.patches) == 0.0

    def test_origin_order_row_major(self, rng):
        image = rng.random((5, 6))
        ps = extract_patches(image, 3)
        assert ps.origins[0].tolist() == [0, 0]
        assert ps.origins[1].tolist() == [0, 1]
        assert ps.origins[4].tolist() == [1, 0]
        np.testing.assert_array_equal(ps.patches[:, 4], image[1:4, 0:3].ravel())

    def test_patch_larger_than_image_rejected(self):
        with pytest.raises(ValueError):
            extract_patches(np.zeros((4, 4)), 5)


class TestPatchAccumulation:
    def test_counts(self):
        count = patch_count_image((20, 30), 8)
        assert count[0, 0] == 1.0  # corner: single covering patch
        assert count[10, 15] == 64.0  # interior: full 8x8 coverage
        assert count[0, 15] == 8.0

    def test_counts_match_overlap_add_of_ones(self):
        shape, edge = (12, 9), 4
        n_r, n_c = shape[0] - edge + 1, shape[1] - edge + 1
        ones = np.ones((edge * edge, n_r * n_c))
        np.testing.assert_array_equal(
            accumulate_patches(ones, shape, edge), patch_count_image(shape, edge)
        )

    def test_perfect_codes_average_back_to_image(self, rng):
        image = rng.random((10, 10))
        ps = extract_patches(image, 4)
        # identity-like dictionary large enough to code exactly: use patches themselves
        num = accumulate_patches(ps.patches, (10, 10), 4)
        count = patch_count_image((10, 10), 4)
        np.testing.assert_allclose(num / count, image, atol=1e-12)

    def test_adjoint_accumulate_shapes_and_counts(self, rng):
        shape, edge = (9, 9), 3
        image = rng.random(shape)
        ps = extract_patches(image, edge)
        dictionary = Dictionary(random_unit_dictionary(rng, edge * edge, 16))
        codes = omp_batch(dictionary, ps.patches, 4, 0.0)
        num, count = patch_adjoint_accumulate(codes, dictionary, shape, edge)
        assert num.shape == shape
        np.testing.assert_array_equal(count, patch_count_image(shape, edge))

    def test_dimension_mismatch_rejected(self, rng):
        dictionary = Dictionary(random_unit_dictionary(rng, 9, 16))
        codes = omp_batch(dictionary, rng.random((9, 4)), 2, 0.0)
        with pytest.raises(ValueError):
            patch_adjoint_accumulate(codes, dictionary, (10, 10), 3)


class TestOmp:
    def test_single_atom_signal(self, rng):
        D = random_unit_dictionary(rng, 16, 32)
        code = omp(D, 3.0 * D[:, 5], 4, 1e-12)
        assert code.support(0).tolist() == [5]
        np.testing.assert_allclose(code.coeffs(0), [3.0], atol=1e-10)

    def test_orthonormal_dictionary_picks_top_correlations(self, rng):
        Q = np.linalg.qr(rng.standard_normal((16, 16)))[0]
        signal = Q @ rng.standard_normal(16)
        code = omp(Q, signal, 2, 0.0)
        ips = Q.T @ signal
        expected = set(np.argsort(-np.abs(ips))[:2].tolist())
        assert set(code.support(0).tolist()) == expected
        for k, c in zip(code.support(0), code.coeffs(0)):
            assert c == pytest.approx(ips[k], abs=1e-12)

    def test_zero_signal_empty_support(self, rng):
        D = random_unit_dictionary(rng, 16, 32)
        code = omp(D, np.zeros(16), 3, 0.0)
        assert code.lengths[0] == 0

    def test_residual_orthogonality(self, rng):
        D = random_unit_dictionary(rng, 24, 48)
        for _ in range(10):
            x = rng.standard_normal(24)
            code = omp(D, x, 8, 0.0)
            resid = x - code.reconstruct(Dictionary(D))[:, 0]
            sel = code.support(0)
            assert np.abs(D[:, sel].T @ resid).max() <= 1e-8

    def test_error_bound_stopping(self, rng):
        D = random_unit_dictionary(rng, 16, 64)
        x = rng.standard_normal(16)
        tol = 0.25 * float(x @ x)
        code = omp(D, x, 16, tol)
        err = float(coding_residual_sq(Dictionary(D), x[:, None], code)[0])
        assert err <= tol or code.lengths[0] == 16

    def test_sparsity_cap(self, rng):
        D = random_unit_dictionary(rng, 16, 64)
        codes = omp_batch(D, rng.standard_normal((16, 40)), 5, 0.0)
        assert codes.lengths.max() <= 5
        for s in range(codes.n_patches):
            sup = codes.support(s)
            assert np.unique(sup).size == sup.size

    def test_unnormalized_dictionary_rejected(self, rng):
        bad = 2.0 * random_unit_dictionary(rng, 8, 12)
        with pytest.raises(ValueError):
            omp(bad, np.ones(8), 2)

    def test_nonfinite_signal_rejected(self, rng):
        D = random_unit_dictionary(rng, 8, 12)
        with pytest.raises(ValueError):
            omp(D, np.array([np.nan] + [0.0] * 7), 2)

    def test_batch_matches_single(self, rng):
        D = random_unit_dictionary(rng, 12, 30)
        X = rng.standard_normal((12, 15))
        batch = omp_batch(D, X, 4, 0.1)
        for s in range(15):
            single = omp(D, X[:, s], 4, 0.1)
            assert batch.support(s).tolist() == single.support(0).tolist()
            np.testing.assert_allclose(batch.coeffs(s), single.coeffs(0), atol=1e-12)


class TestTrainDictionary:
    def test_identical_patches_single_atom(self):
        v = np.array([1.0, 2.0, 2.0])
        X = np.tile(v[:, None], (1, 20))
        d = train_dictionary(X, 1, sweeps=3, max_atoms=1, seed=0)
        np.testing.assert_allclose(np.abs(d.atoms[:, 0]), v / np.linalg.norm(v), atol=1e-12)
        codes = omp_batch(d, X, 1, 0.0)
        assert coding_residual_sq(d, X, codes).max() <= 1e-20

    def test_deterministic(self, rng):
        X = rng.standard_normal((16, 200))
        a = train_dictionary(X, 24, sweeps=4, max_atoms=3, seed=5)
        b = train_dictionary(X, 24, sweeps=4, max_atoms=3, seed=5)
        np.testing.assert_array_equal(a.atoms, b.atoms)

    def test_objective_non_increasing(self, rng):
        X = rng.standard_normal((16, 300))
        objectives: list[float] = []
        train_dictionary(X, 32, sweeps=8, max_atoms=4, seed=2, objective_out=objectives)
        assert len(objectives) == 8
        for prev, nxt in zip(objectives, objectives[1:]):
            assert nxt <= prev * (1 + 1e-9)

    def test_unit_norm_atoms(self, rng):
        X = rng.standard_normal((9, 120))
        d = train_dictionary(X, 18, sweeps=3, max_atoms=3, seed=1)
        np.testing.assert_allclose(np.linalg.norm(d.atoms, axis=0), 1.0, atol=1e-9)

    def test_small_training_set_tops_up_with_random_atoms(self, rng):
        X = rng.standard_normal((8, 5))
        d = train_dictionary(X, 12, sweeps=2, max_atoms=2, seed=3)
        assert d.atoms.shape == (8, 12)
        np.testing.assert_allclose(np.linalg.norm(d.atoms, axis=0), 1.0, atol=1e-9)

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            train_dictionary(np.zeros((4, 0)), 4)

    def test_bad_atom_count_rejected(self, rng):
        with pytest.raises(ValueError):
            train_dictionary(rng.random((4, 10)), 0)


class TestDictionaryType:
    def test_unit_norm_enforced(self, rng):
        with pytest.raises(ValueError):
            Dictionary(rng.standard_normal((8, 16)))

    def test_reconstruct_uses_padded_codes_safely(self, rng):
        D = Dictionary(random_unit_dictionary(rng, 6, 9))
        codes = omp_batch(D, np.zeros((6, 3)), 2, 0.0)
        recon = codes.reconstruct(D)
        assert not recon.any()
