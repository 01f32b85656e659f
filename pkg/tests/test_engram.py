import numpy as np
import pytest

from cortexkit import autodiff as ad
from cortexkit.engram import (AVG_CLAMP, EmaTracker, EngramAutoencoder,
                              EngramCore, MnistEngramAutoencoder, SparsityStats,
                              density_heatmap, engram_sparse_loss, field_centroid,
                              field_peak, reconstruction_loss,
                              sparsity_control_coeff, time_sparse_loss)


def small_model(n_neurons=10, in_dim=2, seed=0, **kw):
    model = EngramAutoencoder(n_neurons=n_neurons, encoder_widths=(6, 8),
                              random_state=seed, **kw)
    model._init_core(in_dim)
    return model


class TestEncode:
    def test_zero_coding_weights_give_half(self):
        model = small_model()
        model.core_.coding.W.value[...] = 0.0
        model.core_.coding.b.value[...] = 0.0
        h = model.transform(np.random.default_rng(0).uniform(size=(5, 2)))
        np.testing.assert_array_equal(h, np.full((5, 10), 0.5))

    def test_open_unit_interval(self):
        model = small_model()
        h = model.transform(np.random.default_rng(1).normal(0, 50, size=(20, 2)))
        assert np.all((h > 0) & (h < 1))

    def test_matches_layer_stack_oracle(self):
        model = small_model()
        core = model.core_
        x = np.random.default_rng(2).uniform(size=(4, 2))
        a = x
        for blk in core.encoder:
            z = a @ blk.W.value + blk.b.value
            a = np.where(z >= 0, z, 0.01 * z)
        z = a @ core.coding.W.value + core.coding.b.value
        expected = 1.0 / (1.0 + np.exp(-z))
        np.testing.assert_allclose(model.transform(x), expected, rtol=1e-12)

    def test_wrong_width_rejected(self):
        with pytest.raises(ValueError):
            small_model().transform(np.zeros((3, 5)))


class TestDecode:
    def test_one_hot_returns_matrix_row_exactly(self):
        model = small_model()
        for i in (0, 3, 9):
            h = np.zeros((1, 10))
            h[0, i] = 1.0
            out = model.inverse_transform(h)
            assert np.array_equal(out[0], model.mapping_matrix_[i])

    def test_zero_code_returns_origin(self):
        out = small_model().inverse_transform(np.zeros((2, 10)))
        np.testing.assert_array_equal(out, np.zeros((2, 2)))

    def test_matches_weighted_mean_oracle(self):
        model = small_model()
        rng = np.random.default_rng(3)
        h = rng.uniform(0.0, 1.0, size=(5, 10))
        M = model.mapping_matrix_
        expected = np.zeros((5, 2))
        for r in range(5):
            total = h[r].sum()
            for j in range(2):
                acc = 0.0
                for i in range(10):
                    acc += h[r, i] * M[i, j]
                expected[r, j] = acc / total
        np.testing.assert_allclose(model.inverse_transform(h), expected, rtol=1e-12)


class TestLosses:
    def test_reconstruction_zero_when_equal(self):
        x = np.random.default_rng(4).uniform(size=(3, 2))
        assert reconstruction_loss(x, x.copy()) == 0.0

    def test_reconstruction_unit_case(self):
        assert reconstruction_loss(np.array([[0.0, 0.0]]),
                                   np.array([[1.0, 1.0]])) == 1.0

    def test_reconstruction_matches_formula(self):
        rng = np.random.default_rng(5)
        x, y = rng.uniform(size=(4, 2)), rng.uniform(size=(4, 2))
        manual = np.mean([((x[i] - y[i]) ** 2).sum() / 2 for i in range(4)])
        assert reconstruction_loss(x, y) == pytest.approx(manual, rel=1e-12)

    def test_engram_sparse_zero_at_exact_pattern(self):
        h = np.zeros((1, 1000))
        h[0, :50] = 1.0
        assert engram_sparse_loss(h, 0.05) == 0.0

    def test_engram_sparse_flat_eta_value(self):
        h = np.full((1, 1000), 0.05)
        # |1000*eta^2 - 50| + |1000*0.95^2 - 950| = 47.5 + 47.5
        assert engram_sparse_loss(h, 0.05) == pytest.approx(95.0)

    def test_engram_sparse_all_zero_value(self):
        assert engram_sparse_loss(np.zeros((1, 1000)), 0.05) == pytest.approx(100.0)

    def test_engram_sparse_zero_iff_pattern(self):
        rng = np.random.default_rng(6)
        n, eta = 40, 0.1
        exact = np.zeros((1, n))
        exact[0, rng.permutation(n)[:4]] = 1.0
        assert engram_sparse_loss(exact, eta) == 0.0
        wrong_count = np.zeros((1, n))
        wrong_count[0, :5] = 1.0
        assert engram_sparse_loss(wrong_count, eta) > 0
        graded = np.full((1, n), eta)
        assert engram_sparse_loss(graded, eta) > 0

    def test_engram_sparse_batch_mean(self):
        a = np.zeros((1, 20))
        b = np.ones((1, 20))
        stacked = np.vstack([a, b])
        expected = (engram_sparse_loss(a, 0.05) + engram_sparse_loss(b, 0.05)) / 2
        assert engram_sparse_loss(stacked, 0.05) == pytest.approx(expected)

    def test_time_sparse_zero_at_target_average(self):
        h = np.random.default_rng(7).uniform(size=(4, 30))
        avg = np.full(30, 0.05)
        assert time_sparse_loss(h, avg, 0.05) == pytest.approx(0.0, abs=1e-15)

    def test_time_sparse_sign_pushes_overused_down(self):
        # overused unit: positive coefficient, so larger h raises the loss
        avg = np.full(20, 0.3)
        low = time_sparse_loss(np.full((1, 20), 0.1), avg, 0.05)
        high = time_sparse_loss(np.full((1, 20), 0.9), avg, 0.05)
        assert sparsity_control_coeff(avg, 0.05)[0] > 0
        assert high > low
        # starved unit: negative coefficient, more activity lowers the loss
        starved = np.full(20, 0.001)
        assert sparsity_control_coeff(np.clip(starved, AVG_CLAMP, 1), 0.05)[0] < 0
        assert (time_sparse_loss(np.full((1, 20), 0.9), starved, 0.05)
                < time_sparse_loss(np.full((1, 20), 0.1), starved, 0.05))


class TestEmaTracker:
    def test_one_step_value(self):
        tracker = EmaTracker(1, 0.99, 0.05)
        tracker.update(np.array([1.0]))
        assert tracker.avg[0] == pytest.approx(0.0595)

    def test_fixed_point(self):
        tracker = EmaTracker(3, 0.9, 0.5)
        for _ in range(400):
            tracker.update(np.full(3, 0.123))
        np.testing.assert_allclose(tracker.avg, 0.123, rtol=1e-9)

    def test_stays_in_unit_interval(self):
        rng = np.random.default_rng(8)
        tracker = EmaTracker(5, 0.99, 0.05)
        for _ in range(500):
            tracker.update(rng.uniform(size=5))
            assert np.all((tracker.avg >= 0) & (tracker.avg <= 1))
            clamped = tracker.clamped()
            assert np.all((clamped >= AVG_CLAMP) & (clamped <= 1 - AVG_CLAMP))


class TestTotalLoss:
    def test_weighted_sum_relation(self):
        model = small_model()
        core = model.core_
        x = np.random.default_rng(9).uniform(size=(4, 2))
        xn = ad.constant(x)
        h, recon = core.code_nodes(xn)
        total, comp = core.loss_nodes(h, recon, x, update_trackers=False)
        expected = (1000.0 * comp["reconstruction"] + 0.01 * comp["engram_sparse"]
                    + 10.0 * comp["time_sparse"])
        assert comp["total"] == pytest.approx(expected, rel=1e-12)
        assert total.item() == comp["total"]

    def test_component_weighting_arithmetic(self):
        # components (0.001, 95, 0.2) combine to 3.95 under the default weights
        assert 1000.0 * 0.001 + 0.01 * 95 + 10.0 * 0.2 == pytest.approx(3.95)

    def test_long_short_mix(self):
        model = small_model()
        core = model.core_
        core.tracker_long.avg[...] = 0.2
        core.tracker_short.avg[...] = 0.08
        x = np.random.default_rng(10).uniform(size=(3, 2))
        xn = ad.constant(x)
        h, recon = core.code_nodes(xn)
        _, comp = core.loss_nodes(h, recon, x, update_trackers=False)
        expected = (0.9 * time_sparse_loss(h.data, core.tracker_long.avg, core.eta)
                    + 0.1 * time_sparse_loss(h.data, core.tracker_short.avg, core.eta))
        assert comp["time_sparse"] == pytest.approx(expected, rel=1e-12)

    def test_trackers_updated_once_per_step(self):
        model = small_model()
        core = model.core_
        x = np.random.default_rng(11).uniform(size=(8, 2))
        before_long = core.tracker_long.avg.copy()
        h = core.encode(x)
        core.train_step(x, 1e-4)
        expected = before_long * 0.9999 + (1 - 0.9999) * h.mean(axis=0)
        np.testing.assert_allclose(core.tracker_long.avg, expected, rtol=1e-12)


class TestTraining:
    def test_components_finite_on_first_step(self):
        model = small_model()
        comp = model.core_.train_step(
            np.random.default_rng(12).uniform(size=(16, 2)), 1e-4)
        assert all(np.isfinite(v) for v in comp.values())

    def test_reconstruction_improves_on_uniform_square(self):
        model = EngramAutoencoder(n_neurons=40, encoder_widths=(16, 16),
                                  batch_size=64, n_steps=400, learning_rate=1e-3,
                                  random_state=0)
        rng = np.random.default_rng(13)
        model.fit(rng.uniform(size=(2000, 2)))
        first = np.mean([h["reconstruction"] for h in model.history_[:20]])
        last = np.mean([h["reconstruction"] for h in model.history_[-20:]])
        assert last < first

    def test_bit_reproducible(self):
        runs = []
        for _ in range(2):
            model = EngramAutoencoder(n_neurons=20, encoder_widths=(8, 8),
                                      batch_size=32, n_steps=30, random_state=5)
            model.fit(np.random.default_rng(14).uniform(size=(500, 2)))
            runs.append((model.mapping_matrix_.copy(),
                         [h["total"] for h in model.history_]))
        assert np.array_equal(runs[0][0], runs[1][0])
        assert runs[0][1] == runs[1][1]


class TestSparsityStats:
    def test_flat_half_activations_are_all_mid(self):
        model = small_model()
        model.core_.coding.W.value[...] = 0.0
        model.core_.coding.b.value[...] = 0.0
        stats = model.sparsity_statistics(np.random.default_rng(15).uniform(size=(50, 2)))
        assert stats.frac_mid == 1.0
        assert stats.frac_inhibited == 0.0 and stats.frac_extreme == 0.0

    def test_fractions_sum_to_one(self):
        rng = np.random.default_rng(16)
        for _ in range(5):
            stats = SparsityStats.from_activations(rng.uniform(size=(100, 40)))
            assert abs(stats.frac_inhibited + stats.frac_mid + stats.frac_extreme
                       - 1.0) < 1e-12

    def test_threshold_placement(self):
        h = np.array([[0.005, 0.5, 0.995, 0.01, 0.99]])
        stats = SparsityStats.from_activations(h)
        # 0.01 and 0.99 land in the middle band (strict outer inequalities)
        assert stats.frac_inhibited == pytest.approx(0.2)
        assert stats.frac_extreme == pytest.approx(0.2)
        assert stats.frac_mid == pytest.approx(0.6)


class TestAnalysisMaps:
    def test_place_field_values_and_shape(self):
        model = small_model()
        field = model.place_field(3, grid_n=21)
        assert field.shape == (21, 21)
        assert np.all((field > 0) & (field < 1))

    def test_place_field_index_range(self):
        with pytest.raises(IndexError):
            small_model().place_field(10)

    def test_grid_needs_2d_model(self):
        with pytest.raises(ValueError):
            small_model(in_dim=3).grid_activations()

    def test_field_peak_and_centroid_on_synthetic_bump(self):
        grid_n = 101
        axis = np.linspace(0, 1, grid_n)
        gx, gy = np.meshgrid(axis, axis)
        field = np.exp(-((gx - 0.7) ** 2 + (gy - 0.4) ** 2) / (2 * 0.05**2))
        value, (px, py) = field_peak(field)
        assert value == pytest.approx(1.0, abs=1e-6)
        assert (px, py) == pytest.approx((0.7, 0.4), abs=0.011)
        cx, cy = field_centroid(field)
        assert (cx, cy) == pytest.approx((0.7, 0.4), abs=0.02)

    def test_characteristic_locations_are_matrix_rows(self):
        model = small_model()
        pts = model.characteristic_locations()
        assert np.array_equal(pts, model.mapping_matrix_)
        pts[0, 0] = 99.0  # returned copy must not alias the parameter
        assert model.mapping_matrix_[0, 0] != 99.0


class TestDensityHeatmap:
    def test_mass_sums_to_one(self):
        pts = np.random.default_rng(17).uniform(size=(500, 2))
        hist, _, _ = density_heatmap(pts, bins=10)
        assert hist.sum() == pytest.approx(1.0)

    def test_outside_points_dropped(self):
        pts = np.array([[0.5, 0.5], [2.0, 2.0], [-1.0, 0.5]])
        hist, _, _ = density_heatmap(pts, bins=4)
        assert hist.sum() == pytest.approx(1.0)
        assert hist[2, 2] == pytest.approx(1.0)

    def test_empty_inside_gives_zeros(self):
        hist, _, _ = density_heatmap(np.array([[5.0, 5.0]]), bins=4)
        assert hist.sum() == 0.0


class TestSnapshot:
    def test_round_trip_preserves_behavior(self, tmp_path):
        model = small_model(seed=3)
        model.core_.tracker_long.avg[...] = np.linspace(0.01, 0.2, 10)
        x = np.random.default_rng(18).uniform(size=(6, 2))
        path = tmp_path / "model.ckpt"
        model.save(path)
        loaded = EngramAutoencoder.load(path)
        assert np.array_equal(loaded.transform(x), model.transform(x))
        assert np.array_equal(loaded.mapping_matrix_, model.mapping_matrix_)
        assert np.array_equal(loaded.core_.tracker_long.avg,
                              model.core_.tracker_long.avg)
        assert loaded.get_params() == model.get_params()

    def test_kind_mismatch_rejected(self, tmp_path):
        model = MnistEngramAutoencoder(code_dim=4, hidden_widths=(6,),
                                       n_neurons=8, encoder_widths=(6,),
                                       random_state=0)
        model._init_net(9)
        path = tmp_path / "image.ckpt"
        model.save(path)
        with pytest.raises(ValueError, match="snapshot holds"):
            EngramAutoencoder.load(path)


class TestImageJointModel:
    def make(self):
        model = MnistEngramAutoencoder(code_dim=5, hidden_widths=(8, 8),
                                       n_neurons=12, encoder_widths=(6, 8),
                                       batch_size=8, n_steps=5, random_state=0)
        model._init_net(16)
        return model

    def test_total_is_weighted_sum(self):
        model = self.make()
        comp = model._train_batch(np.random.default_rng(19).uniform(size=(4, 16)))
        expected = 100.0 * comp["image"] + (
            1000.0 * comp["reconstruction"] + 0.01 * comp["engram_sparse"]
            + 10.0 * comp["time_sparse"])
        assert comp["total"] == pytest.approx(expected, rel=1e-12)

    def test_transform_deterministic(self):
        model = self.make()
        imgs = np.random.default_rng(20).uniform(size=(3, 16))
        assert np.array_equal(model.transform(imgs), model.transform(imgs))

    def test_reconstruct_shape_and_range(self):
        model = self.make()
        imgs = np.random.default_rng(21).uniform(size=(3, 16))
        out = model.reconstruct(imgs)
        assert out.shape == (3, 16)
        assert np.all((out > 0) & (out < 1))  # final sigmoid layer

    def test_decoder_consumes_code_mean(self):
        model = self.make()
        imgs = np.random.default_rng(22).uniform(size=(2, 16))
        code = model.codes(imgs)
        mixed = 0.5 * (code + model.core_.decode(model.core_.encode(code)))
        x = mixed
        for blk in model.image_decoder_:
            x = blk.forward(x)
        np.testing.assert_array_equal(model.reconstruct(imgs), x)

    def test_joint_snapshot_round_trip(self, tmp_path):
        model = self.make()
        imgs = np.random.default_rng(23).uniform(size=(3, 16))
        model.partial_fit(imgs)
        path = tmp_path / "joint.ckpt"
        model.save(path)
        loaded = MnistEngramAutoencoder.load(path)
        assert np.array_equal(loaded.reconstruct(imgs), model.reconstruct(imgs))
        assert np.array_equal(loaded.transform(imgs), model.transform(imgs))
