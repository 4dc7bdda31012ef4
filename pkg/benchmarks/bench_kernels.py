"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Shapes match one training step of the default detector on 32x32 frames.
Both backends must produce identical output; the script checks that first.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from fusecue import kernels
from fusecue.lbp import LbpConfig


def cases(rng):
    x = rng.standard_normal((32, 16, 32, 32)).astype(np.float32)
    cols = rng.standard_normal((16 * 9, 32 * 32 * 32)).astype(np.float32)
    pooled_in = rng.standard_normal((32, 32, 16, 16)).astype(np.float32)
    _, arg = kernels.python.maxpool2_forward(pooled_in)
    dout = rng.standard_normal((32, 32, 8, 8)).astype(np.float32)
    img = rng.random((64, 64))
    dy, dx = LbpConfig().offsets()
    return {
        "im2col 32x16x32x32 k3": ("im2col", (x, 3, 1)),
        "col2im 32x16x32x32 k3": ("col2im", (cols, x.shape, 3, 1)),
        "maxpool2 fwd 32x32x16x16": ("maxpool2_forward", (pooled_in,)),
        "maxpool2 bwd 32x32x16x16": ("maxpool2_backward", (dout, arg, pooled_in.shape)),
        "lbp codes 64x64": ("lbp_codes", (img, dy, dx, False, 1)),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled extension not available; build with `pip install -e .`", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':28s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, (name, call_args) in cases(rng).items():
        py, cy = getattr(kernels.python, name), getattr(kernels.compiled, name)
        if not same(py(*call_args), cy(*call_args)):
            print(f"{label}: backends disagree", file=sys.stderr)
            return 1
        t = {}
        for backend, fn in (("python", py), ("cython", cy)):
            timer = timeit.Timer(lambda: fn(*call_args))
            n, _ = timer.autorange()
            t[backend] = min(timer.repeat(args.repeat, n)) / n * 1e3
        rows.append({"kernel": label, "python_ms": t["python"], "cython_ms": t["cython"]})
        print(f"{label:28s} {t['python']:10.3f} {t['cython']:10.3f} {t['python'] / t['cython']:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
