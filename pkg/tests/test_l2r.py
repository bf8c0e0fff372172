import numpy as np
import pytest

import oracles
from vidinspect import l2r
from vidinspect.errors import ConfigurationError, InsufficientSupportError, NumericError


def _latent(rng, F=4, H=5, W=5, C=16):
    return rng.standard_normal((F, H, W, C)).astype(np.float32)


def _zeros_like(w):
    return l2r.L2RWeights({k: np.zeros_like(v) for k, v in w.layers.items()})


def test_layer_arithmetic():
    # two blocks of (2*3*3*16*16 + 16) + (16*16 + 16), depthwise upsample 16*18*64 + 16*64,
    # 9x9 16->16 and 3x3 16->3 projections with biases
    block = (2 * 3 * 3 * 16 * 16 + 16) + (16 * 16 + 16)
    up = 16 * 18 * 64 + 16 * 64
    proj = (9 * 9 * 16 * 16 + 16) + (3 * 3 * 16 * 3 + 3)
    total = 2 * block + up + proj
    assert total == 50_435
    assert l2r.expected_param_count(16) == total
    assert l2r.param_count(l2r.init_weights(0)) == total
    assert l2r.PARAM_BUDGET[0] <= total <= l2r.PARAM_BUDGET[1]


def test_param_count_degenerate_and_monotone():
    assert l2r.param_count(l2r.L2RWeights({})) == 0
    assert l2r.expected_param_count(32) > l2r.expected_param_count(16) > l2r.expected_param_count(8)


def test_init_weights_seeded_and_bounded():
    a, b = l2r.init_weights(3), l2r.init_weights(3)
    for name in a.layers:
        assert np.array_equal(a[name], b[name])
        assert a[name].dtype == np.float32
        assert np.abs(a[name]).max() <= l2r.INIT_SCALE
    assert not np.array_equal(a["proj9.w"], l2r.init_weights(4)["proj9.w"])


def test_conv_block_zero_weights(weights, rng, backend):
    z = _latent(rng)
    out = l2r.conv_block(z, _zeros_like(weights), "block1", backend)
    assert not out.any()


def test_conv_block_identity_skip(weights, rng, backend):
    w = _zeros_like(weights)
    w.layers["block1.skip.w"] = np.eye(16, dtype=np.float32)
    z = _latent(rng)
    np.testing.assert_array_equal(l2r.conv_block(z, w, "block1", backend), np.tanh(z))


def test_conv_block_matches_oracle(weights, rng, backend):
    z = _latent(rng)
    main = oracles.conv3d_causal(z, weights["block1.main.w"], weights["block1.main.b"])
    skip = oracles.pointwise(z, weights["block1.skip.w"], weights["block1.skip.b"])
    expected = np.tanh(main + skip)
    assert oracles.rel_err(l2r.conv_block(z, weights, "block1", backend), expected) < 1e-6


def test_conv_block_channel_mismatch(weights, rng):
    with pytest.raises(ConfigurationError):
        l2r.conv_block(_latent(rng, C=8), weights, "block1")


def test_learned_upsample(weights, rng, backend):
    z = _latent(rng, F=2, H=3, W=4)
    y = l2r.learned_upsample(z, weights, backend)
    assert y.shape == (2, 24, 32, 16)
    expected = oracles.upsample(z, weights["upsample.w"], weights["upsample.b"])
    assert oracles.rel_err(y, expected) < 1e-6
    with pytest.raises(InsufficientSupportError):
        l2r.learned_upsample(_latent(rng, H=2), weights, backend)


def test_project_rgb_zero_features_is_bias(weights, backend):
    feats = np.zeros((3, 24, 24, 16), np.float32)
    y = l2r.project_rgb(feats, weights, backend)
    assert y.shape == (3, 24, 24, 3)
    # zero input through proj9 leaves its bias, which proj3 then maps
    h = np.broadcast_to(weights["proj9.b"], (1, 24, 24, 16))
    expected = oracles.conv2d(h, weights["proj3.w"], weights["proj3.b"])
    for f in range(3):
        np.testing.assert_array_equal(y[f], y[0])
    assert oracles.rel_err(y[0], expected[0]) < 1e-6


def test_project_rgb_matches_oracle_and_is_per_frame(weights, rng, backend):
    feats = rng.standard_normal((2, 16, 16, 16)).astype(np.float32)
    y = l2r.project_rgb(feats, weights, backend)
    h = oracles.conv2d(feats, weights["proj9.w"], weights["proj9.b"])
    assert oracles.rel_err(y, oracles.conv2d(h, weights["proj3.w"], weights["proj3.b"])) < 1e-6
    feats[0] += 1.0
    assert np.array_equal(l2r.project_rgb(feats, weights, backend)[1:], y[1:])


def test_forward_minimal_latent(weights, rng, backend):
    y = l2r.l2r_forward(_latent(rng, F=1, H=3, W=3), weights, backend)
    assert y.shape == (1, 24, 24, 3)
    assert y.dtype == np.float32


def test_forward_deterministic_and_causal(weights, rng, backend):
    z = _latent(rng, F=5, H=4, W=5)
    y = l2r.l2r_forward(z, weights, backend)
    assert np.array_equal(y, l2r.l2r_forward(z.copy(), weights, backend))
    for f in range(1, 5):
        z2 = z.copy()
        z2[f] += 0.5
        y2 = l2r.l2r_forward(z2, weights, backend)
        assert np.array_equal(y[:f], y2[:f])
        assert not np.array_equal(y[f], y2[f])


def test_forward_rejects_bad_input(weights, rng):
    z = _latent(rng)
    z[0, 0, 0, 0] = np.inf
    with pytest.raises(NumericError):
        l2r.l2r_forward(z, weights)
    with pytest.raises(ConfigurationError):
        l2r.l2r_forward(_latent(rng, C=4), weights)
    broken = l2r.L2RWeights(dict(weights.layers))
    broken.layers["proj3.w"] = np.zeros((3, 3, 16, 4), np.float32)
    with pytest.raises(ConfigurationError, match="proj3.w"):
        l2r.l2r_forward(_latent(rng), broken)


def test_output_shape_preview_latent(weights):
    assert l2r.output_shape((13, 60, 90, 16), weights) == (13, 480, 720, 3)


@pytest.mark.slow
def test_forward_full_preview_resolution(weights):
    z = np.random.default_rng(0).standard_normal((13, 60, 90, 16)).astype(np.float32)
    y = l2r.l2r_forward(z, weights, backend="numpy")
    assert y.shape == (13, 480, 720, 3)
    assert np.all(np.isfinite(y))


def test_weight_file_roundtrip(weights, tmp_path):
    path = tmp_path / "w.bin"
    l2r.save_weights(weights, path)
    loaded = l2r.load_weights(path)
    assert loaded.layers.keys() == weights.layers.keys()
    for k in weights.layers:
        assert np.array_equal(loaded[k], weights[k])
    assert loaded.shape_problems() == []


def test_weight_file_layout(weights, tmp_path):
    import json
    import struct

    path = tmp_path / "w.bin"
    l2r.save_weights(weights, path)
    raw = path.read_bytes()
    assert raw[:4] == b"L2RW"
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + hlen])
    entry = next(e for e in header["layers"] if e["name"] == "proj3.b")
    start = 8 + hlen + entry["offset"]
    np.testing.assert_array_equal(np.frombuffer(raw[start:start + 12], "<f4"), weights["proj3.b"])


def test_corrupt_weight_files(tmp_path, weights):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"not a weight file")
    with pytest.raises(ConfigurationError):
        l2r.load_weights(p)
    good = tmp_path / "w.bin"
    l2r.save_weights(weights, good)
    truncated = tmp_path / "t.bin"
    truncated.write_bytes(good.read_bytes()[:-100])
    with pytest.raises(ConfigurationError, match="past end"):
        l2r.load_weights(truncated)
