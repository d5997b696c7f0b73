import numpy as np
import pytest

from sigdims import net, profiler
from sigdims.arch import ArchConfig
from sigdims.data import (
    Dataset,
    load_cifar_binary,
    synthetic_tenclass,
    write_cifar_binary,
)
from sigdims.errors import DataError, DimensionError, FormatError, TrainingError

from reference_configs import VGG16_INITIAL


def tiny_config(tokens=(4,), classes=3, side=6, c=1):
    return ArchConfig(tokens=tokens, classifier_width=classes, input_shape=(side, side, c))


def two_class_blobs(n, seed, side=6):
    """Linearly separable two-class set: bright vs dark mean level."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    base = np.where(labels[:, None, None, None] == 1, 1.0, -1.0)
    images = base + rng.normal(0.0, 0.1, size=(n, side, side, 1))
    return Dataset(images=images, labels=labels)


def direct_conv(x, weight, bias):
    """Oracle: nested-loop 3x3/pad-1 convolution."""
    b, h, w, cin = x.shape
    cout = weight.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.zeros((b, h, w, cout))
    for bi in range(b):
        for oi in range(cout):
            for hi in range(h):
                for wi in range(w):
                    acc = bias[oi]
                    for ky in range(3):
                        for kx in range(3):
                            for ci in range(cin):
                                acc += weight[oi, ci, ky, kx] * xp[bi, hi + ky, wi + kx, ci]
                    out[bi, hi, wi, oi] = acc
    return out


class TestBuild:
    def test_deterministic(self):
        cfg = tiny_config((4, "M", 8))
        a, b = net.build(cfg, seed=11), net.build(cfg, seed=11)
        for (n1, t1), (n2, t2) in zip(a.all_tensors(), b.all_tensors()):
            assert n1 == n2 and np.array_equal(t1, t2)
        c = net.build(cfg, seed=12)
        assert not np.array_equal(a.blocks[0].weight, c.blocks[0].weight)

    def test_classifier_input_dimension(self):
        cfg = ArchConfig(tokens=(8, "M", 16), classifier_width=10, input_shape=(8, 8, 1))
        p = net.build(cfg, seed=0)
        assert p.fc_weight.shape == (10, 16 * 4 * 4)

    def test_reference_vgg16_vector_builds(self):
        p = net.build(VGG16_INITIAL, seed=0)
        assert len(p.blocks) == 13
        assert p.blocks[0].weight.shape == (64, 3, 3, 3)

    def test_spatial_collapse_is_an_error(self):
        cfg = ArchConfig(
            tokens=(2, "M", 2, "M", 2, "M", 2, "M"), classifier_width=2,
            input_shape=(8, 8, 1),
        )
        with pytest.raises(DimensionError):
            net.build(cfg, seed=0)

    def test_param_count_matches_profiler(self):
        for cfg in (tiny_config((4, "M", 8, 8)), VGG16_INITIAL):
            p = net.build(cfg, seed=0)
            assert p.param_count() == profiler.count(cfg).params


class TestForward:
    def test_zero_weight_net_taps_and_logits(self):
        cfg = tiny_config((4, "M", 4), classes=5)
        p = net.build(cfg, seed=0)
        for _, arr in p.learnable():
            arr[...] = 0.0
        for blk in p.blocks:
            blk.gamma[...] = 1.0  # keep BN scale, zero everything else
        x = np.random.default_rng(0).normal(size=(3, 6, 6, 1))
        logits, taps = net.forward_with_taps(p, x)
        assert len(taps) == 2
        for tap in taps:
            assert np.allclose(tap.data, 0.0)
        assert np.allclose(logits, 0.0)
        assert np.all(logits == logits[:, :1])

    def test_identity_kernel_pre_bn_tap(self):
        cfg = tiny_config((1,), classes=2, side=5)
        p = net.build(cfg, seed=0)
        p.blocks[0].weight[...] = 0.0
        p.blocks[0].weight[0, 0, 1, 1] = 1.0
        p.blocks[0].bias[...] = 0.0
        x = np.random.default_rng(1).normal(size=(2, 5, 5, 1))
        _, taps = net.forward_with_taps(p, x, tap=net.TAP_PRE_BN)
        assert np.allclose(taps[0].data[..., 0], x[..., 0])

    def test_conv_matches_direct_oracle(self):
        cfg = ArchConfig(tokens=(3,), classifier_width=2, input_shape=(4, 4, 2))
        p = net.build(cfg, seed=3)
        x = np.random.default_rng(4).normal(size=(2, 4, 4, 2))
        _, taps = net.forward_with_taps(p, x, tap=net.TAP_PRE_BN)
        oracle = direct_conv(x, p.blocks[0].weight, p.blocks[0].bias)
        assert np.max(np.abs(taps[0].data - oracle)) < 1e-5

    def test_tap_count_and_ids(self):
        cfg = tiny_config((2, "M", 3, 4), classes=2)
        p = net.build(cfg, seed=0)
        x = np.zeros((1, 6, 6, 1))
        _, taps = net.forward_with_taps(p, x)
        assert [t.layer_id for t in taps] == [0, 1, 2]
        assert taps[1].dims == (1, 3, 3, 3)

    def test_shape_mismatch(self):
        p = net.build(tiny_config(), seed=0)
        with pytest.raises(DimensionError):
            net.forward_with_taps(p, np.zeros((1, 5, 5, 2)))


class TestTrain:
    def test_zero_lr_only_touches_running_stats(self):
        cfg = tiny_config()
        p = net.build(cfg, seed=0)
        ds = two_class_blobs(32, seed=0)
        hyper = net.Hyper(epochs=1, lr=0.0, batch_size=8)
        trained, _ = net.train(p, ds, hyper, seed=1)
        for (name, before), (_, after) in zip(p.all_tensors(), trained.all_tensors()):
            if "run_" in name:
                assert not np.array_equal(before, after)
            else:
                assert np.array_equal(before, after)

    def test_fits_separable_data(self):
        cfg = tiny_config((4,), classes=2)
        p = net.build(cfg, seed=0)
        ds = two_class_blobs(200, seed=5)
        hyper = net.Hyper(epochs=20, lr=0.05, batch_size=32)
        trained, history = net.train(p, ds, hyper, seed=2)
        assert history[-1]["train_acc"] >= 0.99

    def test_deterministic_history(self):
        cfg = tiny_config((3,), classes=2)
        p = net.build(cfg, seed=0)
        ds = two_class_blobs(64, seed=1)
        hyper = net.Hyper(epochs=3, lr=0.05, batch_size=16)
        _, h1 = net.train(p, ds, hyper, seed=9, test=ds)
        _, h2 = net.train(p, ds, hyper, seed=9, test=ds)
        assert h1 == h2

    def test_divergence_raises_with_epoch(self):
        cfg = tiny_config((4,), classes=2)
        p = net.build(cfg, seed=0)
        p.fc_weight[0, 0] = np.nan  # poisoned weights surface as a NaN loss
        ds = two_class_blobs(64, seed=1)
        hyper = net.Hyper(epochs=5, lr=0.05, batch_size=16)
        with pytest.raises(TrainingError, match="epoch 0"):
            net.train(p, ds, hyper, seed=0)

    def test_label_range_checked(self):
        p = net.build(tiny_config(classes=2), seed=0)
        ds = Dataset(images=np.zeros((4, 6, 6, 1)), labels=np.array([0, 1, 2, 0]))
        with pytest.raises(ValueError):
            net.train(p, ds, net.Hyper(epochs=1), seed=0)


class TestEvaluate:
    def test_constant_logits_hit_chance_level(self):
        cfg = tiny_config((2,), classes=10)
        p = net.build(cfg, seed=0)
        for _, arr in p.learnable():
            arr[...] = 0.0
        labels = np.repeat(np.arange(10), 5)
        ds = Dataset(images=np.random.default_rng(0).normal(size=(50, 6, 6, 1)), labels=labels)
        assert net.evaluate(p, ds) == pytest.approx(0.1)

    def test_memorizing_net_scores_one(self):
        cfg = tiny_config((4,), classes=2)
        p = net.build(cfg, seed=0)
        ds = two_class_blobs(40, seed=3)
        trained, _ = net.train(p, ds, net.Hyper(epochs=25, lr=0.05, batch_size=8), seed=1)
        assert net.evaluate(trained, ds) == 1.0

    def test_order_invariant(self):
        cfg = tiny_config((3,), classes=2)
        p = net.build(cfg, seed=1)
        ds = two_class_blobs(30, seed=2)
        perm = np.random.default_rng(0).permutation(30)
        shuffled = Dataset(images=ds.images[perm], labels=ds.labels[perm])
        assert net.evaluate(p, ds) == pytest.approx(net.evaluate(p, shuffled))

    def test_empty_dataset_rejected(self):
        p = net.build(tiny_config(), seed=0)
        with pytest.raises(ValueError):
            net.evaluate(p, Dataset(images=np.zeros((0, 6, 6, 1)), labels=np.zeros(0, int)))


class TestCifarLoader:
    def test_two_record_file(self, tmp_path):
        path = tmp_path / "two.bin"
        images = np.zeros((2, 32, 32, 3), dtype=np.uint8)
        images[0, ..., 0] = 255  # red plane of record 0
        write_cifar_binary(path, images, np.array([3, 7]))
        ds = load_cifar_binary(path)
        assert len(ds) == 2
        assert list(ds.labels) == [3, 7]
        raw = path.read_bytes()
        assert raw[0] == 3 and raw[3073] == 7

    def test_plane_order_and_scaling(self, tmp_path):
        path = tmp_path / "planes.bin"
        images = np.zeros((1, 32, 32, 3), dtype=np.uint8)
        images[0, ..., 0] = 255
        write_cifar_binary(path, images, np.array([0]))
        ds = load_cifar_binary(path, mean=(0.5, 0.5, 0.5), std=(0.25, 0.25, 0.25))
        assert np.allclose(ds.images[0, :, :, 0], (1.0 - 0.5) / 0.25)
        assert np.allclose(ds.images[0, :, :, 1], (0.0 - 0.5) / 0.25)

    def test_truncated_record(self, tmp_path):
        path = tmp_path / "trunc.bin"
        path.write_bytes(bytes(3073 + 100))
        with pytest.raises(FormatError, match="3073"):
            load_cifar_binary(path)

    def test_bad_label(self, tmp_path):
        path = tmp_path / "badlabel.bin"
        rec = bytearray(3073)
        rec[0] = 11
        path.write_bytes(bytes(rec))
        with pytest.raises(DataError, match="label 11"):
            load_cifar_binary(path)

    def test_subset(self, tmp_path):
        path = tmp_path / "sub.bin"
        images, labels = synthetic_tenclass(20, seed=0)
        write_cifar_binary(path, images, labels)
        assert len(load_cifar_binary(path, subset=5)) == 5


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = tiny_config((3, "M", 5), classes=4)
        p = net.build(cfg, seed=7)
        ds = two_class_blobs(32, seed=0)
        p, _ = net.train(p, Dataset(ds.images, ds.labels % 4), net.Hyper(epochs=1), seed=0)
        path = tmp_path / "model.netp"
        net.save_checkpoint(p, path)
        back = net.load_checkpoint(path)
        assert back.config == p.config
        for (n1, a), (_, b) in zip(p.all_tensors(), back.all_tensors()):
            assert np.allclose(a, b, atol=1e-6), n1
        x = np.random.default_rng(0).normal(size=(4, 6, 6, 1))
        l1, _ = net.forward_with_taps(p, x)
        l2, _ = net.forward_with_taps(back, x)
        assert np.allclose(l1, l2, atol=1e-4)

    def test_bad_magic(self, tmp_path):
        p = net.build(tiny_config(), seed=0)
        path = tmp_path / "model.netp"
        net.save_checkpoint(p, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            net.load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        p = net.build(tiny_config(), seed=0)
        path = tmp_path / "model.netp"
        net.save_checkpoint(p, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])
        with pytest.raises(FormatError, match="bytes"):
            net.load_checkpoint(path)
