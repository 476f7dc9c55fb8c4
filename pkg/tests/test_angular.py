import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfsr.angular import (
    AngularNetBundle,
    angular_sr_lenslet,
    angular_sr_lightfield,
    angular_training_arrays,
    build_angular_bundle,
    build_angular_net,
    load_angular_bundle,
    make_angular_training_set,
    save_angular_bundle,
    train_angular,
    train_angular_arrays,
)
from lfsr.architectures import FILTER_SIZE_VARIANTS, NetworkConfig
from lfsr.errors import ShapeError
from lfsr.lightfield import LightField
from lfsr.nn import FC, TrainConfig, forward
from lfsr.synthetic import random_lightfield, smooth_lightfield


def _zero(bundle):
    for net in bundle.networks:
        for layer in net.layers:
            if layer.weight is not None:
                layer.weight[...] = 0.0
                layer.bias[...] = 0.0
    return bundle


def test_default_net_at_seven_has_196_outputs():
    net = build_angular_net(7)
    assert net.input_shape == (1, 7, 7)
    assert net.layers[-1].spec.kind == FC
    assert net.layers[-1].spec.n_in == 5 * 5 * 32
    assert net.layers[-1].spec.n_out == 196


def test_filter_size_variant_builds():
    net = build_angular_net(7, FILTER_SIZE_VARIANTS["k2=5"])
    assert net.layers[2].weight.shape == (32, 64, 5, 5)
    assert net.layers[-1].spec.n_in == 32


def test_too_small_grid_rejected():
    with pytest.raises(ShapeError, match="does not fit"):
        build_angular_net(2)


def test_training_pair_count_paper_grid():
    lf = LightField(np.zeros((3, 187, 270, 2, 2)))
    x, y, ch = angular_training_arrays(lf)
    assert len(x) == 187 * 270 * 3 == 151_470
    assert x.shape[1:] == (1, 1, 1) and y.shape[1:] == (4,)
    assert list(np.bincount(ch)) == [187 * 270] * 3


def test_training_pairs_are_decimated_lenslets():
    lf = random_lightfield(3, 2, 4, channels=3, seed=1)
    samples = make_angular_training_set(lf)
    assert len(samples) == 18
    for s in samples:
        full = lf.lenslet(*s.origin, channel=s.channel).data
        np.testing.assert_array_equal(s.target, full)
        np.testing.assert_array_equal(s.input, full[::2, ::2])


def test_constant_field_gives_constant_pairs():
    x, y, _ = angular_training_arrays(LightField(np.full((1, 2, 2, 4, 4), 0.4)))
    assert np.all(x == 0.4) and np.all(y == 0.4)


def test_odd_angular_rejected_for_training():
    with pytest.raises(ShapeError):
        angular_training_arrays(random_lightfield(2, 2, 5))


def test_zero_network_gives_zero_output():
    bundle = _zero(build_angular_bundle(3, 1))
    out = angular_sr_lenslet(bundle, np.full((3, 3), 0.7))
    assert out.data.shape == (6, 6) and not out.data.any()


def test_output_clamped_and_copy_through():
    bundle = build_angular_bundle(3, 1)
    for layer in bundle.networks[0].layers:
        if layer.weight is not None:
            layer.weight[...] = 0.0
            layer.bias[...] = 0.0
    bundle.networks[0].layers[-1].bias[...] = 5.0
    lens = np.random.default_rng(0).random((3, 3))
    assert np.all(angular_sr_lenslet(bundle, lens).data == 1.0)
    bundle.copy_through = True
    out = angular_sr_lenslet(bundle, lens).data
    np.testing.assert_array_equal(out[::2, ::2], lens)


def test_lightfield_shape_law():
    bundle = build_angular_bundle(7, 3)
    lf = random_lightfield(2, 3, 7, channels=3)
    out = angular_sr_lightfield(bundle, lf)
    assert out.shape == (3, 2, 3, 14, 14)
    one = angular_sr_lightfield(build_angular_bundle(3, 1), random_lightfield(1, 1, 3))
    assert one.shape == (1, 1, 1, 6, 6)


def test_lightfield_mismatch_errors():
    bundle = build_angular_bundle(3, 1)
    with pytest.raises(ShapeError):
        angular_sr_lightfield(bundle, random_lightfield(2, 2, 4))
    with pytest.raises(ShapeError):
        angular_sr_lightfield(bundle, random_lightfield(2, 2, 3, channels=3))


def test_bundle_validates_networks():
    with pytest.raises(ShapeError):
        AngularNetBundle([build_angular_net(3)], 4)


def test_per_channel_networks_differ():
    bundle = build_angular_bundle(3, 3, seed=0)
    w = [net.layers[0].weight for net in bundle.networks]
    assert not np.array_equal(w[0], w[1]) and not np.array_equal(w[1], w[2])


def test_overfit_single_sample():
    lf = smooth_lightfield(3, 3, 8, seed=0)
    samples = make_angular_training_set(lf)[:1]
    cfg = TrainConfig(iterations=5000, batch_size=1, log_interval=500)
    bundle, histories = train_angular(samples, cfg)
    init = forward(build_angular_bundle(4, 1).networks[0], samples[0].input[None])
    initial_mse = float(np.mean((init - samples[0].target.ravel()) ** 2))
    assert histories[0][-1][1] < 1e-2 * initial_mse
    pred = angular_sr_lenslet(bundle, samples[0].input).data
    assert np.abs(pred - samples[0].target).mean() < 1e-2


def test_training_deterministic_and_zero_iterations():
    lf = smooth_lightfield(4, 4, 6, channels=3, seed=2)
    x, y, ch = angular_training_arrays(lf)
    cfg = TrainConfig(iterations=30, batch_size=8, log_interval=10, seed=4)
    _, h1, _ = train_angular_arrays(x, y, ch, cfg)
    _, h2, _ = train_angular_arrays(x, y, ch, cfg)
    assert h1 == h2 and sorted(h1) == [0, 1, 2]
    fresh = build_angular_bundle(3, 3, seed=4)
    b0, h0, _ = train_angular_arrays(x, y, ch, TrainConfig(iterations=0, seed=4))
    assert h0 == {0: [], 1: [], 2: []}
    for a, b in zip(fresh.networks, b0.networks):
        np.testing.assert_array_equal(a.layers[-1].weight, b.layers[-1].weight)


def test_bundle_round_trip(tmp_path):
    bundle = build_angular_bundle(3, 3, NetworkConfig([8, 4], [3, 1]), seed=9)
    bundle.copy_through = True
    save_angular_bundle(bundle, tmp_path / "ang")
    back = load_angular_bundle(tmp_path / "ang")
    assert back.angular_in == 3 and back.channels == 3 and back.copy_through
    assert back.config == bundle.config
    for a, b in zip(bundle.networks, back.networks):
        for la, lb in zip(a.layers, b.layers):
            if la.weight is not None:
                np.testing.assert_array_equal(la.weight, lb.weight)


@settings(max_examples=20, deadline=None)
@given(h=st.integers(1, 5), w=st.integers(1, 5), a=st.integers(3, 5), seed=st.integers(0, 100))
def test_lenslets_processed_independently(h, w, a, seed):
    bundle = build_angular_bundle(a, 1, seed=seed, init_std=0.2)
    lf = random_lightfield(h, w, a, seed=seed)
    out = angular_sr_lightfield(bundle, lf)
    s, t = h - 1, w // 2
    np.testing.assert_allclose(out.data[0, s, t], angular_sr_lenslet(bundle, lf.data[0, s, t]).data,
                               atol=1e-14, rtol=0)
