"""Time the compiled window kernels against the numpy fallback.

Run from the repository root:

    python benchmarks/bench_kernels.py --object 256 --probe 64 --positions 1261

Both backends are called directly on the same inputs in a single thread,
and their outputs are checked for agreement before anything is timed.
"""

import argparse
import timeit

import numpy as np

from proxpty import kernels


def make_inputs(obj_n, probe_n, K, seed):
    rng = np.random.default_rng(seed)
    cplx = lambda *s: rng.standard_normal(s) + 1j * rng.standard_normal(s)
    obj = cplx(obj_n, obj_n)
    probe = cplx(probe_n, probe_n)
    back = cplx(K, probe_n, probe_n)
    offsets = rng.integers(0, obj_n - probe_n + 1, size=(K, 2)).astype(np.int64)
    return obj, probe, back, offsets


def cases(mod, obj, probe, back, offsets):
    K, n = len(offsets), probe.shape[0]

    def extract():
        out = np.empty((K, n, n), dtype=np.complex128)
        mod.extract_patches(obj, offsets, out)
        return (out,)

    def embed():
        buf = np.zeros_like(obj)
        mod.embed_add(buf, offsets, back)
        return (buf,)

    def acc_object():
        num = np.zeros_like(obj)
        den = np.zeros(obj.shape)
        mod.accumulate_object(num, den, probe, back, offsets)
        return num, den

    def acc_probe():
        num = np.zeros_like(probe)
        den = np.zeros(probe.shape)
        mod.accumulate_probe(num, den, obj, back, offsets)
        return num, den

    return {"extract": extract, "embed_add": embed,
            "accumulate_object": acc_object, "accumulate_probe": acc_probe}


def best_time(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--object", type=int, default=256)
    p.add_argument("--probe", type=int, default=64)
    p.add_argument("--positions", type=int, default=1261)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--number", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    try:
        compiled = kernels.get_backend("cython")
    except ImportError:
        print("compiled kernels are not built; nothing to compare")
        return 1
    fallback = kernels.get_backend("python")

    inputs = make_inputs(args.object, args.probe, args.positions, args.seed)
    fast = cases(compiled, *inputs)
    slow = cases(fallback, *inputs)

    print(f"object {args.object}^2, probe {args.probe}^2, K={args.positions}")
    print(f"{'kernel':<20}{'cython ms':>12}{'python ms':>12}{'speedup':>10}")
    for name in fast:
        a, b = fast[name](), slow[name]()
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-9)
        tc = best_time(fast[name], args.repeat, args.number)
        tp = best_time(slow[name], args.repeat, args.number)
        print(f"{name:<20}{tc * 1e3:>12.3f}{tp * 1e3:>12.3f}{tp / tc:>9.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
