"""Latent-to-RGB preview converter (forward pass only).

Two causal 3D conv blocks, a depthwise learned 8x upsampler and a 9x9 / 3x3
projection to RGB. All hidden features keep the latent channel width.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigurationError, InsufficientSupportError, NumericError
from .kernels import DTYPE, SUBPIXELS

DEFAULT_CHANNELS = 16
INIT_SCALE = 0.05
PARAM_BUDGET = (50_000, 65_000)

_MAGIC = b"L2RW"


def activation(x):
    # tanh: smooth, saturating, fixes 0
    return np.tanh(x)


def layer_shapes(channels: int = DEFAULT_CHANNELS, subpixels: int = SUBPIXELS) -> dict[str, tuple[int, ...]]:
    """Expected shape of every named tensor for a given latent width."""
    C = channels
    S = subpixels * subpixels
    shapes: dict[str, tuple[int, ...]] = {}
    for blk in ("block1", "block2"):
        shapes[f"{blk}.main.w"] = (2, 3, 3, C, C)
        shapes[f"{blk}.main.b"] = (C,)
        shapes[f"{blk}.skip.w"] = (C, C)
        shapes[f"{blk}.skip.b"] = (C,)
    shapes["upsample.w"] = (2, 3, 3, C, S)
    shapes["upsample.b"] = (C, S)
    shapes["proj9.w"] = (9, 9, C, C)
    shapes["proj9.b"] = (C,)
    shapes["proj3.w"] = (3, 3, C, 3)
    shapes["proj3.b"] = (3,)
    return shapes


@dataclass
class L2RWeights:
    layers: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.layers[name]
        except KeyError:
            raise ConfigurationError(f"missing layer {name!r}") from None

    @property
    def channels(self) -> int:
        return int(self["block1.main.b"].shape[0])

    def shape_problems(self) -> list[str]:
        """Every discrepancy against the layout implied by ``block1.main.b``."""
        if "block1.main.b" not in self.layers:
            return ["missing layer 'block1.main.b'"]
        expected = layer_shapes(self.channels)
        problems = []
        for name, shape in expected.items():
            if name not in self.layers:
                problems.append(f"missing layer {name!r}")
            elif tuple(self.layers[name].shape) != shape:
                problems.append(f"{name}: shape {tuple(self.layers[name].shape)}, expected {shape}")
        for name in self.layers:
            if name not in expected:
                problems.append(f"unexpected layer {name!r}")
        return problems

    def validate(self) -> None:
        problems = self.shape_problems()
        if problems:
            raise ConfigurationError("; ".join(problems))


def init_weights(seed: int = 0, channels: int = DEFAULT_CHANNELS, scale: float = INIT_SCALE) -> L2RWeights:
    """Seeded uniform weights in [-scale, scale]; biases included."""
    rng = np.random.default_rng(seed)
    layers = {
        name: rng.uniform(-scale, scale, size=shape).astype(DTYPE)
        for name, shape in layer_shapes(channels).items()
    }
    return L2RWeights(layers)


def param_count(w: L2RWeights) -> int:
    return int(sum(a.size for a in w.layers.values()))


def expected_param_count(channels: int = DEFAULT_CHANNELS) -> int:
    return int(sum(np.prod(s) for s in layer_shapes(channels).values()))


# ---------------------------------------------------------------------------
# layers

def conv_block(x, w: L2RWeights, name: str, backend=None):
    """tanh(main(x) + skip(x)) with a causal 2x3x3 main and a 1x1x1 skip."""
    C = x.shape[-1]
    mw = w[f"{name}.main.w"]
    if mw.shape[3] != C or mw.shape[4] != C:
        raise ConfigurationError(f"{name}: block must map {C} -> {C} channels, weight is {mw.shape}")
    main = kernels.causal_conv3d(x, mw, w[f"{name}.main.b"], backend=backend)
    skip = kernels.pointwise(x, w[f"{name}.skip.w"], w[f"{name}.skip.b"])
    return activation(main + skip)


def learned_upsample(x, w: L2RWeights, backend=None):
    """8x spatial upsampling from a weighted sum over the previous and current frame neighbourhood."""
    if x.shape[1] < 3 or x.shape[2] < 3:
        raise InsufficientSupportError(f"spatial extent {x.shape[1]}x{x.shape[2]} below 3x3 support")
    u = kernels.depthwise_subpixels(x, w["upsample.w"], w["upsample.b"], backend=backend)
    return kernels.pixel_shuffle(u, SUBPIXELS)


def project_rgb(x, w: L2RWeights, backend=None):
    h = kernels.conv2d_frames(x, w["proj9.w"], w["proj9.b"], backend=backend)
    return kernels.conv2d_frames(h, w["proj3.w"], w["proj3.b"], backend=backend)


def l2r_forward(z, w: L2RWeights, backend=None) -> np.ndarray:
    """Decode a latent video ``(F, H, W, C)`` into an RGB preview ``(F, 8H, 8W, 3)``."""
    z = np.asarray(z, dtype=DTYPE)
    w.validate()
    if z.ndim != 4:
        raise ConfigurationError(f"latent must be (F, H, W, C), got {z.shape}")
    if z.shape[3] != w.channels:
        raise ConfigurationError(f"latent has {z.shape[3]} channels, weights expect {w.channels}")
    if not np.all(np.isfinite(z)):
        raise NumericError("latent contains non-finite values")
    h = conv_block(z, w, "block1", backend)
    h = conv_block(h, w, "block2", backend)
    h = learned_upsample(h, w, backend)
    return project_rgb(h, w, backend)


def output_shape(latent_shape, w: L2RWeights) -> tuple[int, int, int, int]:
    """Propagate a latent shape through the layer stack without computing anything."""
    w.validate()
    F, H, W, C = latent_shape
    if C != w.channels:
        raise ConfigurationError(f"latent has {C} channels, weights expect {w.channels}")
    if F < 1:
        raise ConfigurationError("latent has no frames")
    if H < 3 or W < 3:
        raise InsufficientSupportError(f"spatial extent {H}x{W} below 3x3 support")
    return (F, H * SUBPIXELS, W * SUBPIXELS, int(w["proj3.w"].shape[3]))


# ---------------------------------------------------------------------------
# weight container: magic, u32 header length, JSON header, float32 LE payload

def save_weights(w: L2RWeights, path) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, arr in w.layers.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"dtype": "<f4", "layers": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_weights(path) -> L2RWeights:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != _MAGIC:
        raise ConfigurationError(f"{path}: not a weight container")
    (hlen,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: corrupt header ({exc})") from None
    if header.get("dtype") != "<f4":
        raise ConfigurationError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    payload = raw[8 + hlen:]
    layers = {}
    for entry in header.get("layers", []):
        shape = tuple(int(s) for s in entry["shape"])
        start = int(entry["offset"])
        nbytes = 4 * int(np.prod(shape))
        if start < 0 or start + nbytes > len(payload):
            raise ConfigurationError(f"{path}: layer {entry['name']!r} runs past end of file")
        layers[entry["name"]] = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=start).reshape(shape).astype(DTYPE)
    return L2RWeights(layers)
