"""Time the numba and numpy kernel backends on preview-sized inputs.

    python benchmarks/bench_kernels.py [--frames 13 --height 60 --width 90] [--repeat 3]

The numba column excludes JIT compilation (one warm-up call per kernel).
The default column is ``backend=None``, i.e. the per-kernel choice the
package makes on its own.
"""

import argparse
import time

import numpy as np

from vidinspect import _accel, kernels, l2r


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=13)
    ap.add_argument("--height", type=int, default=60)
    ap.add_argument("--width", type=int, default=90)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else []) + ["default"]
    w = l2r.init_weights(args.seed)
    rng = np.random.default_rng(args.seed)
    F, H, W = args.frames, args.height, args.width
    z = rng.standard_normal((F, H, W, 16)).astype(np.float32)
    feats = rng.standard_normal((F, 8 * H, 8 * W, 16)).astype(np.float32)

    cases = {
        "causal_conv3d": lambda be: kernels.causal_conv3d(z, w["block1.main.w"], w["block1.main.b"], backend=be),
        "depthwise_subpixels": lambda be: kernels.depthwise_subpixels(z, w["upsample.w"], w["upsample.b"], backend=be),
        "conv2d_frames 9x9": lambda be: kernels.conv2d_frames(feats, w["proj9.w"], w["proj9.b"], backend=be),
        "l2r_forward": lambda be: l2r.l2r_forward(z, w, backend=be),
    }
    print(f"latent {F}x{H}x{W}x16, best of {args.repeat}")
    print(f"backend={_accel.backend_name()} (VIDINSPECT_DISABLE_NUMBA unset selects numba where it wins)")
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + "  numpy/numba")
    for name, fn in cases.items():
        row = {}
        for be in backends:
            arg = None if be == "default" else be
            if be != "numpy":
                fn(arg)  # compile / warm caches
            row[be] = best_of(lambda: fn(arg), args.repeat)
        line = f"{name:<22}" + "".join(f"{row[b]:>11.3f}s" for b in backends)
        if "numba" in row:
            line += f"  {row['numpy'] / row['numba']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
