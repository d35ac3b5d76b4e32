import numpy as np
import pytest

from afrnet.errors import ContractError, DataError, DimensionError
from afrnet.kernels import rbf_kernel_matrix
from afrnet.prototype import (
    PrototypeTable,
    SvrConfig,
    apply_selection,
    compute_prototypes,
    fit_prototype_predictor,
    pca_fit,
    pca_transform,
    predict_prototypes,
    rbf_kernel,
    select_features,
    svr_fit,
    svr_predict,
)

from oracles import svr_dual_pg


class TestComputePrototypes:
    def test_singleton_class_mean_is_the_sample(self, rng):
        feats = rng.standard_normal((3, 4))
        table = compute_prototypes(feats, [0, 1, 2])
        np.testing.assert_array_equal(table.matrix, feats)

    def test_opposite_pair_averages_to_zero(self, rng):
        v = rng.standard_normal(5)
        table = compute_prototypes(np.vstack([v, -v]), [7, 7])
        np.testing.assert_allclose(table.matrix, np.zeros((1, 5)), atol=1e-16)
        assert table.class_ids.tolist() == [7]

    def test_matches_brute_force_means(self, rng):
        labels = np.repeat([3, 1, 4, 0], 25)
        feats = rng.standard_normal((100, 6))
        table = compute_prototypes(feats, labels)
        for cid in (0, 1, 3, 4):
            manual = np.zeros(6)
            count = 0
            for r in range(100):
                if labels[r] == cid:
                    manual += feats[r]
                    count += 1
            np.testing.assert_allclose(table.row_for(cid), manual / count, atol=1e-12)

    def test_scalar_homogeneity(self, rng):
        feats = rng.standard_normal((30, 4))
        labels = rng.integers(0, 3, 30)
        base = compute_prototypes(feats, labels)
        scaled = compute_prototypes(2.5 * feats, labels)
        np.testing.assert_allclose(scaled.matrix, 2.5 * base.matrix, rtol=1e-12)

    def test_empty_class_named_in_error(self, rng):
        with pytest.raises(DataError, match="9"):
            compute_prototypes(rng.standard_normal((4, 2)), [0, 0, 1, 1], class_ids=[0, 1, 9])

    def test_rows_for_missing_class(self, rng):
        table = compute_prototypes(rng.standard_normal((4, 2)), [0, 0, 1, 1])
        with pytest.raises(DataError, match="5"):
            table.rows_for([0, 5])


class TestPca:
    def test_single_axis_data_recovers_the_axis(self, rng):
        axis = np.array([3.0, 4.0, 0.0]) / 5.0
        data = np.outer(rng.standard_normal(20), axis)
        model = pca_fit(data, 1)
        comp = model.components[0]
        np.testing.assert_allclose(np.abs(comp @ axis), 1.0, atol=1e-10)

    def test_full_rank_transform_preserves_distances(self, rng):
        data = rng.standard_normal((12, 5))
        model = pca_fit(data, 5)
        reduced = pca_transform(model, data)
        for i in range(12):
            for j in range(i + 1, 12):
                orig = np.linalg.norm(data[i] - data[j])
                proj = np.linalg.norm(reduced[i] - reduced[j])
                assert proj == pytest.approx(orig, abs=1e-8)

    def test_components_match_numpy_eigendecomposition(self, rng):
        data = rng.standard_normal((40, 2)) @ np.array([[2.0, 1.2], [0.0, 0.4]])
        model = pca_fit(data, 2)
        cov = np.cov(data, rowvar=False)
        _, vecs = np.linalg.eigh(cov)
        expected = vecs[:, ::-1].T  # descending eigenvalue order
        for row, ref in zip(model.components, expected):
            sign = np.sign(row @ ref)
            np.testing.assert_allclose(row, sign * ref, atol=1e-8)

    def test_components_are_orthonormal(self, rng):
        data = rng.standard_normal((15, 6))
        model = pca_fit(data, 4)
        gram = model.components @ model.components.T
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-8)

    def test_sign_convention_largest_entry_positive(self, rng):
        data = rng.standard_normal((20, 4))
        model = pca_fit(data, 3)
        for row in model.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_target_dim_too_large_rejected(self, rng):
        with pytest.raises(DimensionError):
            pca_fit(rng.standard_normal((5, 8)), 5)  # max is rows - 1 = 4


class TestRbfKernel:
    def test_self_similarity_is_one(self, rng):
        a = rng.standard_normal(6)
        assert rbf_kernel(a, a, 0.8) == 1.0

    def test_zero_gamma_degenerates_to_one(self, rng):
        assert rbf_kernel(rng.standard_normal(4), rng.standard_normal(4), 0.0) == 1.0

    def test_closed_form_value(self):
        assert rbf_kernel([0.0, 0.0], [1.0, 1.0], 0.5) == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            rbf_kernel([1.0, 2.0], [1.0], 1.0)

    def test_matrix_matches_scalar_loop(self, rng):
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((5, 3))
        kmat = rbf_kernel_matrix(a, b, 0.3)
        for i in range(4):
            for j in range(5):
                assert kmat[i, j] == pytest.approx(rbf_kernel(a[i], b[j], 0.3), rel=1e-14)


class TestSvr:
    def test_constant_targets_inside_tube_solve_with_bias_only(self, rng):
        inputs = rng.standard_normal((8, 3))
        targets = np.full(8, 1.37)
        model = svr_fit(inputs, targets, SvrConfig(delta=0.1, gamma=0.5))
        np.testing.assert_array_equal(model.coef, np.zeros(8))
        for row in inputs:
            assert svr_predict(model, row) == pytest.approx(1.37, abs=1e-12)

    def test_zero_targets_predict_zero(self, rng):
        inputs = rng.standard_normal((6, 2))
        model = svr_fit(inputs, np.zeros(6), SvrConfig(delta=0.05, gamma=1.0))
        preds = svr_predict(model, inputs)
        np.testing.assert_allclose(preds, np.zeros(6), atol=1e-12)

    def test_tube_wider_than_target_spread_zeroes_all_duals(self, rng):
        targets = rng.standard_normal(10)
        spread = np.max(np.abs(targets - targets.mean()))
        inputs = rng.standard_normal((10, 3))
        model = svr_fit(inputs, targets, SvrConfig(delta=spread + 0.01, gamma=0.7))
        np.testing.assert_array_equal(model.coef, np.zeros(10))

    def test_dual_objective_matches_projected_gradient_oracle(self, rng):
        for trial in range(5):
            c = int(rng.integers(4, 13))
            dim = int(rng.integers(1, 5))
            inputs = rng.standard_normal((c, dim))
            targets = rng.standard_normal(c)
            config = SvrConfig(alpha=1.0, delta=0.1, gamma=0.5)
            model = svr_fit(inputs, targets, config)
            kmat = rbf_kernel_matrix(inputs, inputs, config.gamma)
            _, oracle_obj = svr_dual_pg(kmat, targets, cap=config.alpha / c, tube=config.delta)
            assert model.dual_objective <= oracle_obj + 1e-6
            assert abs(model.dual_objective - oracle_obj) <= 1e-6
            assert model.kkt <= 1e-6

    def test_kkt_certificate_on_every_fit(self, rng):
        for _ in range(5):
            inputs = rng.standard_normal((9, 2))
            targets = rng.standard_normal(9)
            model = svr_fit(inputs, targets, SvrConfig(alpha=2.0, delta=0.02))
            assert model.kkt <= 1e-6

    def test_too_few_rows_rejected(self, rng):
        with pytest.raises(DataError):
            svr_fit(rng.standard_normal((1, 2)), [0.5])

    def test_invalid_hyperparameters_rejected(self, rng):
        inputs = rng.standard_normal((4, 2))
        with pytest.raises(ContractError):
            svr_fit(inputs, np.zeros(4), SvrConfig(alpha=0.0))
        with pytest.raises(ContractError):
            svr_fit(inputs, np.zeros(4), SvrConfig(delta=-0.1))


class TestSvrPredict:
    def test_training_input_of_constant_model_returns_constant(self, rng):
        inputs = rng.standard_normal((5, 2))
        model = svr_fit(inputs, np.full(5, -0.9), SvrConfig(delta=0.2, gamma=0.4))
        assert svr_predict(model, inputs[2]) == pytest.approx(-0.9, abs=1e-12)

    def test_zero_dual_model_returns_bias(self, rng):
        model = svr_fit(rng.standard_normal((4, 2)), np.full(4, 2.0), SvrConfig(delta=0.5))
        assert np.all(model.coef == 0.0)
        for _ in range(3):
            assert svr_predict(model, rng.standard_normal(2)) == pytest.approx(model.bias, abs=1e-12)

    def test_matches_hand_expansion(self, rng):
        inputs = rng.standard_normal((7, 3))
        targets = rng.standard_normal(7)
        model = svr_fit(inputs, targets, SvrConfig(alpha=3.0, delta=0.01, gamma=0.6))
        e = rng.standard_normal(3)
        expansion = sum(
            model.coef[c] * rbf_kernel(e, inputs[c], model.gamma) for c in range(7)
        ) + model.bias
        assert svr_predict(model, e) == pytest.approx(expansion, abs=1e-12)

    def test_dimension_mismatch_rejected(self, rng):
        model = svr_fit(rng.standard_normal((4, 3)), np.zeros(4))
        with pytest.raises(DimensionError):
            svr_predict(model, np.zeros(2))


class TestPredictorBank:
    def test_single_dimension_bank_equals_direct_fit(self, rng):
        protos = compute_prototypes(rng.standard_normal((12, 1)), rng.integers(0, 4, 12))
        semantics = rng.standard_normal((protos.class_ids.size, 3))
        config = SvrConfig(gamma=0.5)
        bank = fit_prototype_predictor(protos, semantics, config)
        direct = svr_fit(semantics, protos.matrix[:, 0], config)
        np.testing.assert_array_equal(bank.models[0].coef, direct.coef)
        assert bank.models[0].bias == direct.bias

    def test_parallel_and_sequential_fits_are_bit_identical(self, rng):
        protos = compute_prototypes(rng.standard_normal((20, 6)), rng.integers(0, 5, 20))
        semantics = rng.standard_normal((protos.class_ids.size, 4))
        config = SvrConfig(gamma=0.8)
        seq = fit_prototype_predictor(protos, semantics, config, n_jobs=1)
        par = fit_prototype_predictor(protos, semantics, config, n_jobs=4)
        np.testing.assert_array_equal(seq.errors, par.errors)
        for a, b in zip(seq.models, par.models):
            np.testing.assert_array_equal(a.coef, b.coef)
            assert a.bias == b.bias

    def test_each_member_matches_individual_refit(self, rng):
        protos = compute_prototypes(rng.standard_normal((15, 4)), rng.integers(0, 5, 15))
        semantics = rng.standard_normal((protos.class_ids.size, 3))
        config = SvrConfig(alpha=2.0, delta=0.05, gamma=0.4)
        bank = fit_prototype_predictor(protos, semantics, config)
        probes = rng.standard_normal((6, 3))
        for j in range(4):
            refit = svr_fit(semantics, protos.matrix[:, j], config)
            np.testing.assert_allclose(
                svr_predict(bank.models[j], probes), svr_predict(refit, probes), atol=1e-12
            )

    def test_training_error_bookkeeping_matches_predictions(self, rng):
        protos = compute_prototypes(rng.standard_normal((18, 5)), rng.integers(0, 6, 18))
        semantics = rng.standard_normal((protos.class_ids.size, 3))
        bank = fit_prototype_predictor(protos, semantics, SvrConfig(gamma=0.5))
        predicted = predict_prototypes(bank, semantics)
        recomputed = np.sum((predicted.matrix - protos.matrix) ** 2, axis=0)
        np.testing.assert_allclose(recomputed, bank.errors, atol=1e-12)

    def test_pca_reduction_is_applied(self, rng):
        protos = compute_prototypes(rng.standard_normal((16, 3)), rng.integers(0, 8, 16))
        semantics = rng.standard_normal((protos.class_ids.size, 6))
        pca = pca_fit(semantics, 2)
        bank = fit_prototype_predictor(protos, semantics, SvrConfig(gamma=0.5), pca=pca)
        assert bank.models[0].inputs.shape[1] == 2
        # raw rows are reduced on the way in
        table = predict_prototypes(bank, semantics)
        reduced = pca_transform(pca, semantics)
        table2 = predict_prototypes(bank, reduced)
        np.testing.assert_allclose(table.matrix, table2.matrix, atol=1e-12)


class TestPredictPrototypes:
    def test_constant_bank_gives_constant_rows(self, rng):
        protos = compute_prototypes(rng.standard_normal((8, 3)), rng.integers(0, 4, 8))
        protos.matrix[:] = np.array([1.0, -2.0, 0.5])  # constant targets per dimension
        semantics = rng.standard_normal((protos.class_ids.size, 2))
        bank = fit_prototype_predictor(protos, semantics, SvrConfig(delta=0.2, gamma=0.5))
        out = predict_prototypes(bank, rng.standard_normal((5, 2)))
        np.testing.assert_allclose(out.matrix, np.tile([1.0, -2.0, 0.5], (5, 1)), atol=1e-10)

    def test_matches_per_entry_predict_loop(self, rng):
        protos = compute_prototypes(rng.standard_normal((12, 4)), rng.integers(0, 4, 12))
        semantics = rng.standard_normal((protos.class_ids.size, 3))
        bank = fit_prototype_predictor(protos, semantics, SvrConfig(gamma=0.7))
        queries = rng.standard_normal((6, 3))
        table = predict_prototypes(bank, queries)
        for r in range(6):
            for j in range(4):
                assert table.matrix[r, j] == pytest.approx(
                    svr_predict(bank.models[j], queries[r]), abs=1e-14
                )

    def test_wrong_width_rejected(self, rng):
        protos = compute_prototypes(rng.standard_normal((8, 2)), rng.integers(0, 4, 8))
        semantics = rng.standard_normal((protos.class_ids.size, 3))
        bank = fit_prototype_predictor(protos, semantics)
        with pytest.raises(DimensionError):
            predict_prototypes(bank, rng.standard_normal((2, 5)))


class TestSelectFeatures:
    def test_zero_error_dimension_ranks_first(self):
        errors = np.array([0.4, 0.0, 1.2, 0.3])
        assert select_features(errors, 4).tolist() == [1, 3, 0, 2]

    def test_default_k_is_half_the_width(self, rng):
        errors = rng.random(10)
        assert select_features(errors).size == 5
        errors = rng.random(7)
        assert select_features(errors).size == 3  # floor

    def test_matches_brute_force_sort_with_ties(self, rng):
        for _ in range(20):
            errors = rng.integers(0, 4, 12).astype(np.float64)  # lots of ties
            k = int(rng.integers(1, 13))
            got = select_features(errors, k).tolist()
            expected = sorted(range(12), key=lambda j: (errors[j], j))[:k]
            assert got == expected

    def test_enlarging_k_preserves_the_prefix(self, rng):
        errors = rng.random(9)
        previous = []
        for k in range(1, 10):
            current = select_features(errors, k).tolist()
            assert current[: len(previous)] == previous
            previous = current

    def test_out_of_range_k_rejected(self, rng):
        errors = rng.random(5)
        with pytest.raises(ContractError):
            select_features(errors, 0)
        with pytest.raises(ContractError):
            select_features(errors, 6)


class TestApplySelection:
    def test_identity_selection_copies_the_matrix(self, rng):
        m = rng.standard_normal((4, 5))
        out = apply_selection(m, np.arange(5))
        np.testing.assert_array_equal(out, m)
        assert out is not m

    def test_single_column(self, rng):
        m = rng.standard_normal((4, 5))
        np.testing.assert_array_equal(apply_selection(m, [2]), m[:, [2]])

    def test_matches_per_entry_copy(self, rng):
        m = rng.standard_normal((6, 8))
        idx = [5, 0, 3]
        out = apply_selection(m, idx)
        for r in range(6):
            for c, j in enumerate(idx):
                assert out[r, c] == m[r, j]

    def test_out_of_range_index_rejected(self, rng):
        with pytest.raises(DimensionError):
            apply_selection(rng.standard_normal((2, 3)), [0, 3])

    def test_selection_consistency_across_artifacts(self, rng):
        # the same index list reorders prototypes and features identically
        table = compute_prototypes(rng.standard_normal((10, 6)), rng.integers(0, 5, 10))
        feats = rng.standard_normal((7, 6))
        idx = select_features(rng.random(6), 3)
        compact = table.with_selection(idx).compact()
        np.testing.assert_array_equal(compact.matrix, apply_selection(table.matrix, idx))
        np.testing.assert_array_equal(
            apply_selection(feats, idx), feats[:, idx]
        )


class TestPrototypeTable:
    def test_rows_sorted_by_class_id(self, rng):
        m = rng.standard_normal((3, 2))
        table = PrototypeTable([5, 1, 3], m)
        assert table.class_ids.tolist() == [1, 3, 5]
        np.testing.assert_array_equal(table.row_for(5), m[0])

    def test_duplicate_ids_rejected(self, rng):
        with pytest.raises(DataError):
            PrototypeTable([1, 1], rng.standard_normal((2, 2)))

    def test_selection_validation(self, rng):
        with pytest.raises(DimensionError):
            PrototypeTable([0, 1], rng.standard_normal((2, 3)), selected=[0, 7])
