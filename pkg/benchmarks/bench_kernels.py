"""Time every hot kernel and one training step on each available backend.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import platform
import time

import numpy as np

from eulernet import kernels
from eulernet.model import EulerNet, loss, tiny_config
from eulernet.tensor import Tensor


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    x = rng.random((16, 16, 256, 256), dtype=np.float32)
    w = rng.standard_normal((16, 16, 3, 3)).astype(np.float32)
    g = rng.random((16, 16, 256, 256), dtype=np.float32)
    _, arg = kernels.maxpool2(x)
    gp = rng.random((16, 16, 128, 128), dtype=np.float32)
    seq = rng.random((4, 4, 128 * 128), dtype=np.float32)
    coef = (0.9, 0.1, 0.05, -0.2, 0.1)
    yseq = kernels.diirf(seq, coef)
    poly = np.array([[5.5, 3.2], [60.1, 10.0], [50.0, 61.3], [8.0, 40.0]]) * 4
    return {
        "conv3x3 fwd 16x16ch 256^2": lambda: kernels.conv3x3(x, w),
        "conv3x3 grad input": lambda: kernels.conv3x3_grad_input(g, w),
        "conv3x3 grad weight": lambda: kernels.conv3x3_grad_weight(x, g),
        "maxpool2 fwd": lambda: kernels.maxpool2(x),
        "maxpool2 bwd": lambda: kernels.maxpool2_grad(gp, arg),
        "diirf fwd T=4 128^2": lambda: kernels.diirf(seq, coef),
        "diirf bwd": lambda: kernels.diirf_grad(seq, seq, yseq, coef),
        "rasterize 256^2": lambda: kernels.rasterize(poly, 256, 256),
    }


def train_step_case(rng):
    model = EulerNet.init(tiny_config())
    clip = Tensor(rng.random((4, 4, 3, 256, 256), dtype=np.float32))
    target = np.ones((4, 32, 32))

    def step():
        model.zero_grad()
        loss(model.forward(clip), target).backward()

    return step


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()

    results = {}
    for backend in kernels.available_backends():
        rng = np.random.default_rng(0)
        with kernels.use_backend(backend):
            timings = {name: _best(fn, args.repeat) for name, fn in cases(rng).items()}
            timings["train step (tiny, 4x4 frames)"] = _best(train_step_case(rng), max(1, args.repeat // 2))
        results[backend] = timings

    names = list(next(iter(results.values())))
    backends = list(results)
    print(f"# {platform.processor() or platform.machine()}, numpy {np.__version__}")
    header = f"{'kernel':34s}" + "".join(f"{b:>12s}" for b in backends)
    if "compiled" in results and "python" in results:
        header += f"{'speedup':>10s}"
    print(header)
    for name in names:
        row = f"{name:34s}" + "".join(f"{results[b][name] * 1e3:10.2f}ms" for b in backends)
        if "compiled" in results and "python" in results:
            row += f"{results['python'][name] / results['compiled'][name]:9.1f}x"
        print(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
