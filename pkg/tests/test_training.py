import numpy as np
import pytest
from numpy.testing import assert_array_equal

from lawq.datasets import Dataset
from lawq.errors import BadValue
from lawq.quantizers import QuantizedLayer
from lawq.training import (NetworkState, ScheduleConfig, TrainConfig, clips_weights,
                           layer_alphas, lr_schedule, network_blobs, train)


def toy_blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    half = n // 2
    x = np.vstack([rng.normal([-1.5, 0.0], 0.4, (half, 2)),
                   rng.normal([1.5, 0.0], 0.4, (half, 2))])
    y = np.array([0] * half + [1] * half)
    return Dataset(x, y)


class TestLrSchedule:
    def test_milestones(self):
        s = ScheduleConfig(lr=0.01, kind="milestones", factor=0.1, milestones=(15, 25))
        assert lr_schedule(14, s) == pytest.approx(0.01)
        assert lr_schedule(15, s) == pytest.approx(0.001)
        assert lr_schedule(25, s) == pytest.approx(0.0001)

    def test_unit_factor_is_constant(self):
        s = ScheduleConfig(lr=0.02, kind="milestones", factor=1.0, milestones=(3, 6))
        assert all(lr_schedule(e, s) == 0.02 for e in range(10))

    def test_geometric_after_start(self):
        s = ScheduleConfig(lr=0.002, kind="geometric", factor=0.98, every=1, after=10)
        assert lr_schedule(10, s) == pytest.approx(0.002)
        assert lr_schedule(11, s) == pytest.approx(0.002 * 0.98)
        assert lr_schedule(13, s) == pytest.approx(0.002 * 0.98**3)

    def test_negative_epoch_rejected(self):
        with pytest.raises(BadValue):
            lr_schedule(-1, ScheduleConfig(lr=0.01))


class TestTrainConfig:
    def test_unknown_method(self):
        with pytest.raises(BadValue):
            TrainConfig(method="magic")

    def test_clip_rules(self):
        assert clips_weights("lat-approx", 2)
        assert clips_weights("sign", 2)
        assert clips_weights("laq", 2)
        assert not clips_weights("laq", 3)
        assert not clips_weights("full_precision", 2)


class TestTraining:
    def test_full_precision_separable_reaches_zero_error(self):
        cfg = TrainConfig(method="full_precision", epochs=50, batch_size=20, seed=0,
                          hidden=(8,), schedule=ScheduleConfig(lr=0.01, kind="constant"))
        net, metrics = train(cfg, toy_blobs())
        final = [m for m in metrics if m.split == "train"][-1]
        assert final.error_rate == 0.0

    def test_lat_exact_separable(self):
        cfg = TrainConfig(method="lat-exact", epochs=50, batch_size=20, seed=0,
                          hidden=(8,), schedule=ScheduleConfig(lr=0.01, kind="constant"))
        net, metrics = train(cfg, toy_blobs())
        final = [m for m in metrics if m.split == "train"][-1]
        assert final.error_rate <= 0.05

    def test_deterministic_metrics(self):
        cfg = TrainConfig(method="lat-approx", epochs=5, batch_size=20, seed=3,
                          hidden=(6,), schedule=ScheduleConfig(lr=0.01, kind="constant"))
        _, m1 = train(cfg, toy_blobs())
        _, m2 = train(cfg, toy_blobs())
        for a, b in zip(m1, m2):
            assert a.loss == b.loss
            assert a.error_rate == b.error_rate
            assert a.alphas == b.alphas

    def test_ternary_weights_stay_clipped(self):
        cfg = TrainConfig(method="lat-approx", epochs=8, batch_size=20, seed=1,
                          hidden=(6,), schedule=ScheduleConfig(lr=0.5, kind="constant"))
        net, _ = train(cfg, toy_blobs())
        for w in net.weights:
            assert np.max(np.abs(w)) <= 1.0

    def test_mbit_weights_unclipped(self):
        # the same aggressive learning rate pushes shadow weights past 1
        cfg = TrainConfig(method="laq", bits=3, scheme="log", epochs=8, batch_size=20,
                          seed=1, hidden=(6,), schedule=ScheduleConfig(lr=0.5, kind="constant"))
        net, _ = train(cfg, toy_blobs())
        assert max(np.max(np.abs(w)) for w in net.weights) > 1.0

    def test_degenerate_codes_counted_not_raised(self):
        # zero-initialized weights make every sign init all-zero
        cfg = TrainConfig(method="lat-approx", epochs=1, batch_size=20, seed=0,
                          hidden=(4,), init_scale=0.0,
                          schedule=ScheduleConfig(lr=0.01, kind="constant"))
        net, metrics = train(cfg, toy_blobs())
        assert net.degenerate_events > 0
        assert len(metrics) > 0

    def test_quantized_cache_valid_layers(self):
        cfg = TrainConfig(method="lat2-approx", epochs=3, batch_size=20, seed=0,
                          hidden=(5,), schedule=ScheduleConfig(lr=0.01, kind="constant"))
        net, _ = train(cfg, toy_blobs())
        for q, spec in zip(net.quant, net.specs):
            assert isinstance(q, QuantizedLayer)
            assert q.codes.size == spec.fan_in * spec.fan_out
            assert set(np.unique(q.codes)) <= {-1, 0, 1}

    def test_alpha_columns_cover_every_layer(self):
        cfg = TrainConfig(method="lat-approx", epochs=2, batch_size=20, seed=0,
                          hidden=(5, 4), schedule=ScheduleConfig(lr=0.01, kind="constant"))
        net, metrics = train(cfg, toy_blobs())
        assert all(len(m.alphas) == 3 for m in metrics)
        assert all(a > 0 for a in layer_alphas(net))


class TestBlobs:
    def test_network_blob_roundtrip_bitwise(self):
        from lawq.dataio import read_blob, write_blob

        cfg = TrainConfig(method="lat-approx", epochs=2, batch_size=20, seed=5,
                          hidden=(5,), schedule=ScheduleConfig(lr=0.01, kind="constant"))
        net, _ = train(cfg, toy_blobs())
        blobs = network_blobs(net)
        for key in ("weights", "optimizer", "quant"):
            blob = blobs[key]
            assert blob is not None
            again = read_blob(write_blob(blob))
            assert again.kind == blob.kind
            assert again.step == blob.step
            for a, b in zip(again.records, blob.records):
                assert a.name == b.name
                assert a.dims == tuple(b.dims)
                if key == "weights":
                    assert_array_equal(a.values, b.values)
                elif key == "optimizer":
                    assert_array_equal(a.m, b.m)
                    assert_array_equal(a.v, b.v)
                else:
                    assert a.alpha == b.alpha
                    assert_array_equal(a.codes, b.codes)

    def test_quant_blob_reconstruction_closure(self):
        cfg = TrainConfig(method="laq", bits=3, scheme="log", epochs=2, batch_size=20,
                          seed=5, hidden=(5,),
                          schedule=ScheduleConfig(lr=0.01, kind="constant"))
        net, _ = train(cfg, toy_blobs())
        blob = network_blobs(net)["quant"]
        for rec in blob.records:
            recon = rec.reconstruct()
            admissible = rec.alpha * rec.qset().values
            assert np.all(np.isin(recon, admissible))
