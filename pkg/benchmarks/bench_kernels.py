"""Time the native and pure-Python kernel backends on identical inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run on both backends; outputs are checked for equality
before timings are reported.
"""
import argparse
import timeit

import numpy as np

from amatal import kernels


def nms_case(rng, n=2000):
    left = np.sort(rng.uniform(0, 1000, n))
    right = left + rng.uniform(1, 40, n)
    label = rng.integers(1, 17, n)
    return (left, right, label, 0.5)


def match_case(rng, n_det=3000, n_gt=400):
    gs = rng.uniform(0, 1000, n_gt)
    ge = gs + rng.uniform(1, 30, n_gt)
    ds = rng.uniform(0, 1000, n_det)
    de = ds + rng.uniform(1, 30, n_det)
    return (ds, de, rng.integers(0, 8, n_det), gs, ge, rng.integers(0, 8, n_gt), 0.5)


def attention_case(rng, T=1024, D=64):
    q, k, v = (rng.standard_normal((T, D)) for _ in range(3))
    valid = np.ones(T, dtype=np.uint8)
    valid[-100:] = 0
    mem = rng.standard_normal((8, D))
    return (q, k, v, valid, 4, mem, mem.copy(), 1 / np.sqrt(D))


def pool_case(rng, C=256, T=2048):
    valid = np.ones(T, dtype=np.uint8)
    valid[-200:] = 0
    return (rng.standard_normal((C, T)), 5, valid)


CASES = {
    "nms_sorted": nms_case,
    "greedy_match": match_case,
    "window_attention": attention_case,
    "max_pool1d": pool_case,
}


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a), np.asarray(b), rtol=1e-12, atol=1e-12)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = kernels.available_backends()
    if "native" not in backends:
        print("native backend not built; only the python backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}" + "".join(f"{name:>12}" for name in sorted(backends)) + f"{'speedup':>10}")
    for name, make in CASES.items():
        case = make(rng)
        results, times = {}, {}
        for backend, impl in sorted(backends.items()):
            fn = getattr(impl, name)
            results[backend] = fn(*case)
            times[backend] = min(timeit.repeat(lambda: fn(*case), number=1, repeat=args.repeat))
        if len(results) == 2 and not _same(results["native"], results["python"]):
            raise SystemExit(f"{name}: backends disagree")
        row = f"{name:<18}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in sorted(times))
        if len(times) == 2:
            row += f"{times['python'] / times['native']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
