"""Convolution kernels behind the latent-to-RGB converter.

Every layout is channels-last: video features are ``(F, H, W, C)``.
Each kernel has a numpy implementation and a numba one operating on
already padded input; the public functions pad, validate and dispatch.

With ``backend=None`` the choice is per kernel: the dense convolutions
reduce to float32 matmuls that BLAS runs faster than a compiled loop, so
they stay on numpy; the depthwise subpixel kernel has no BLAS form and
runs under numba when :data:`vidinspect._accel.USE_NUMBA` is set.
``benchmarks/bench_kernels.py`` measures both paths for every kernel.
"""

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import ConfigurationError, InsufficientSupportError, NumericError

DTYPE = np.float32
SUBPIXELS = 8  # spatial upsampling factor per axis


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite values in input")


def pad_causal(x: np.ndarray, spatial: int = 1) -> np.ndarray:
    """Replicate frame 0 once in front, reflect-pad H and W by ``spatial``."""
    xp = np.concatenate([x[:1], x], axis=0)
    if spatial:
        xp = np.pad(xp, ((0, 0), (spatial, spatial), (spatial, spatial), (0, 0)), mode="reflect")
    return xp


def pad_spatial(x: np.ndarray, p: int) -> np.ndarray:
    return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)), mode="reflect")


# ---------------------------------------------------------------------------
# numpy path

def _conv3d_numpy(xp, w, b, out_shape):
    F, H, W, _ = out_shape
    kt, kh, kw = w.shape[:3]
    y = np.zeros((F, H, W, w.shape[4]), dtype=xp.dtype)
    for dt in range(kt):
        for dy in range(kh):
            for dx in range(kw):
                y += xp[dt:dt + F, dy:dy + H, dx:dx + W, :] @ w[dt, dy, dx]
    y += b
    return y


def _depthwise_numpy(xp, w, b, out_shape):
    F, H, W, C = out_shape
    kt, kh, kw = w.shape[:3]
    u = np.zeros((F, H, W, C, w.shape[4]), dtype=xp.dtype)
    for dt in range(kt):
        for dy in range(kh):
            for dx in range(kw):
                u += xp[dt:dt + F, dy:dy + H, dx:dx + W, :, None] * w[dt, dy, dx]
    u += b
    return u


def _conv2d_numpy(xp, w, b, out_shape):
    F, H, W, _ = out_shape
    kh, kw = w.shape[:2]
    y = np.zeros((F, H, W, w.shape[3]), dtype=xp.dtype)
    for dy in range(kh):
        for dx in range(kw):
            y += xp[:, dy:dy + H, dx:dx + W, :] @ w[dy, dx]
    y += b
    return y


# ---------------------------------------------------------------------------
# numba path; accumulators are float64 and rounded once on store

@njit(cache=True, parallel=True)
def _conv3d_numba(xp, w, b, F, H, W):
    kt, kh, kw, ci_n, co_n = w.shape
    y = np.empty((F, H, W, co_n), dtype=xp.dtype)
    for f in prange(F):
        acc = np.empty(co_n, dtype=np.float64)
        for i in range(H):
            for j in range(W):
                for co in range(co_n):
                    acc[co] = 0.0
                for dt in range(kt):
                    for dy in range(kh):
                        for dx in range(kw):
                            for ci in range(ci_n):
                                v = np.float64(xp[f + dt, i + dy, j + dx, ci])
                                for co in range(co_n):
                                    acc[co] += v * w[dt, dy, dx, ci, co]
                for co in range(co_n):
                    y[f, i, j, co] = acc[co] + b[co]
    return y


@njit(cache=True, parallel=True)
def _depthwise_numba(xp, w, b, F, H, W):
    kt, kh, kw, c_n, s_n = w.shape
    u = np.empty((F, H, W, c_n, s_n), dtype=xp.dtype)
    for f in prange(F):
        acc = np.empty(s_n, dtype=np.float64)
        for i in range(H):
            for j in range(W):
                for c in range(c_n):
                    for s in range(s_n):
                        acc[s] = 0.0
                    for dt in range(kt):
                        for dy in range(kh):
                            for dx in range(kw):
                                v = np.float64(xp[f + dt, i + dy, j + dx, c])
                                for s in range(s_n):
                                    acc[s] += v * w[dt, dy, dx, c, s]
                    for s in range(s_n):
                        u[f, i, j, c, s] = acc[s] + b[c, s]
    return u


@njit(cache=True, parallel=True)
def _conv2d_numba(xp, w, b, F, H, W):
    kh, kw, ci_n, co_n = w.shape
    y = np.empty((F, H, W, co_n), dtype=xp.dtype)
    for f in prange(F):
        acc = np.empty(co_n, dtype=np.float64)
        for i in range(H):
            for j in range(W):
                for co in range(co_n):
                    acc[co] = 0.0
                for dy in range(kh):
                    for dx in range(kw):
                        for ci in range(ci_n):
                            v = np.float64(xp[f, i + dy, j + dx, ci])
                            for co in range(co_n):
                                acc[co] += v * w[dy, dx, ci, co]
                for co in range(co_n):
                    y[f, i, j, co] = acc[co] + b[co]
    return y


# ---------------------------------------------------------------------------
# public entry points

def _use_numba(backend, auto=True):
    """``auto`` is the kernel's preference when no backend is requested."""
    if backend is None:
        return auto and _accel.USE_NUMBA
    if backend not in ("numba", "numpy"):
        raise ConfigurationError(f"unknown backend {backend!r}")
    return backend == "numba" and _accel.HAVE_NUMBA


def _as_video(x, name="input"):
    x = np.asarray(x)
    if x.ndim != 4:
        raise ConfigurationError(f"{name} must be (F, H, W, C), got shape {x.shape}")
    if x.shape[0] < 1:
        raise ConfigurationError(f"{name} has no frames")
    _check_finite(x)
    return x


def causal_conv3d(x, w, b, backend=None):
    """Causal 2x3x3 convolution, same-size output.

    ``w`` is ``(2, 3, 3, C_in, C_out)`` where time index 0 is the previous
    frame and index 1 the current one.
    """
    x = _as_video(x)
    w = np.asarray(w)
    b = np.asarray(b)
    if w.ndim != 5 or w.shape[:3] != (2, 3, 3):
        raise ConfigurationError(f"conv3d weight must be (2, 3, 3, Ci, Co), got {w.shape}")
    if w.shape[3] != x.shape[3]:
        raise ConfigurationError(f"conv3d expects {w.shape[3]} input channels, got {x.shape[3]}")
    if b.shape != (w.shape[4],):
        raise ConfigurationError(f"conv3d bias must be ({w.shape[4]},), got {b.shape}")
    F, H, W, _ = x.shape
    if H < 3 or W < 3:
        raise InsufficientSupportError(f"spatial extent {H}x{W} below 3x3 support")
    xp = pad_causal(x)
    if _use_numba(backend, auto=False):
        return _conv3d_numba(xp, w.astype(x.dtype), b.astype(x.dtype), F, H, W)
    return _conv3d_numpy(xp, w.astype(x.dtype), b.astype(x.dtype), (F, H, W, w.shape[4]))


def pointwise(x, w, b):
    """1x1x1 convolution: a per-location channel mix."""
    x = np.asarray(x)
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[0] != x.shape[-1]:
        raise ConfigurationError(f"pointwise weight {w.shape} does not fit {x.shape[-1]} channels")
    if np.shape(b) != (w.shape[1],):
        raise ConfigurationError(f"pointwise bias must be ({w.shape[1]},), got {np.shape(b)}")
    return (x @ w.astype(x.dtype)) + np.asarray(b, dtype=x.dtype)


def depthwise_subpixels(x, w, b, backend=None):
    """Per-channel causal 2x3x3 conv emitting ``S`` subpixel values per channel.

    Returns ``(F, H, W, C, S)`` before any pixel shuffle.
    """
    x = _as_video(x)
    w = np.asarray(w)
    b = np.asarray(b)
    F, H, W, C = x.shape
    if w.ndim != 5 or w.shape[:4] != (2, 3, 3, C):
        raise ConfigurationError(f"upsample weight must be (2, 3, 3, {C}, S), got {w.shape}")
    if b.shape != w.shape[3:]:
        raise ConfigurationError(f"upsample bias must be {w.shape[3:]}, got {b.shape}")
    if H < 3 or W < 3:
        raise InsufficientSupportError(f"spatial extent {H}x{W} below 3x3 support")
    xp = pad_causal(x)
    if _use_numba(backend):
        return _depthwise_numba(xp, w.astype(x.dtype), b.astype(x.dtype), F, H, W)
    return _depthwise_numpy(xp, w.astype(x.dtype), b.astype(x.dtype), (F, H, W, C))


def pixel_shuffle(u, factor=SUBPIXELS):
    """``(F, H, W, C, factor**2)`` -> ``(F, factor*H, factor*W, C)``.

    Subpixel ``s`` lands at row offset ``s // factor`` and column offset
    ``s % factor``.
    """
    F, H, W, C, S = u.shape
    if S != factor * factor:
        raise ConfigurationError(f"expected {factor * factor} subpixels, got {S}")
    u = u.reshape(F, H, W, C, factor, factor)
    return u.transpose(0, 1, 4, 2, 5, 3).reshape(F, H * factor, W * factor, C)


def conv2d_frames(x, w, b, backend=None):
    """Square-kernel 2D conv applied to every frame independently, reflect padded."""
    x = _as_video(x)
    w = np.asarray(w)
    b = np.asarray(b)
    if w.ndim != 4 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
        raise ConfigurationError(f"conv2d weight must be (k, k, Ci, Co) with odd k, got {w.shape}")
    if w.shape[2] != x.shape[3]:
        raise ConfigurationError(f"conv2d expects {w.shape[2]} input channels, got {x.shape[3]}")
    if b.shape != (w.shape[3],):
        raise ConfigurationError(f"conv2d bias must be ({w.shape[3]},), got {b.shape}")
    F, H, W, _ = x.shape
    p = w.shape[0] // 2
    if H <= p or W <= p:
        raise InsufficientSupportError(f"spatial extent {H}x{W} too small for {w.shape[0]}x{w.shape[0]} reflect padding")
    xp = pad_spatial(x, p)
    if _use_numba(backend, auto=False):
        return _conv2d_numba(xp, w.astype(x.dtype), b.astype(x.dtype), F, H, W)
    return _conv2d_numpy(xp, w.astype(x.dtype), b.astype(x.dtype), (F, H, W, w.shape[3]))
