"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel gets inputs of the size the pipeline uses (64-sample channels,
3-component fits, the 8-32-32-4-1 network on one frame's echoes). Outputs of
the two backends are compared before timing.
"""

import argparse
import timeit

import numpy as np

from echoloc import _pykernels

try:
    from echoloc import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    theta = np.array([1.0, 18.0, 2.0, 0.8, 0.9, 26.0, 1.1, -0.5, 0.5, 44.0, 1.8, 0.2])
    y, _ = _pykernels.emg_model_jacobian(theta, 64)
    y = y + rng.normal(0, 0.02, 64)
    start = theta.copy()
    start[1::4] += 0.7
    start[3::4] = 0.0

    dims = (8, 32, 32, 4, 1)
    layers = []
    for a, b in zip(dims[:-1], dims[1:]):
        layers += [rng.normal(size=(a, b)) * 0.3, rng.normal(size=b) * 0.1]
    x = rng.normal(size=(12, 8))
    a1, a2, emb, z4 = _pykernels.mlp_forward(x, *layers)
    g_logit, g_emb = rng.normal(size=z4.shape), rng.normal(size=emb.shape)
    bwd = (x, a1, a2, emb, g_logit, g_emb, layers[2], layers[4], layers[6])

    return {
        "emg_model_jacobian (3 comp, T=64)": ("emg_model_jacobian", (theta, 64), 2000),
        "mlp_forward (12 echoes)": ("mlp_forward", (x, *layers), 2000),
        "mlp_backward (12 echoes)": ("mlp_backward", bwd, 2000),
        "lm_fit (3 comp, T=64)": ("lm_fit", (y, start, 200, 1e-3, 10.0, 1e-20, 0.25), 50),
    }


def same(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(x, y, rtol=1e-6, atol=1e-8) for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python us':>11s} {'cython us':>11s} {'speedup':>8s}  match")
    for name, (fn, inputs, number) in cases(rng).items():
        py = getattr(_pykernels, fn)
        t_py = min(timeit.repeat(lambda: py(*inputs), number=number, repeat=args.repeat)) / number
        if _kernels is None:
            print(f"{name:36s} {t_py * 1e6:11.1f} {'n/a':>11s}")
            continue
        cy = getattr(_kernels, fn)
        ok = same(py(*inputs), cy(*inputs))
        t_cy = min(timeit.repeat(lambda: cy(*inputs), number=number, repeat=args.repeat)) / number
        print(f"{name:36s} {t_py * 1e6:11.1f} {t_cy * 1e6:11.1f} {t_py / t_cy:7.1f}x  {'yes' if ok else 'NO'}")


if __name__ == "__main__":
    main()
