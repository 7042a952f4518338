"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from leosem import kernels


def cases(rng):
    offsets = np.array([0, 6, 9, 12, 14, 20, 23, 26, 28, 37], np.intp)
    logits = rng.normal(size=(256, 37))
    mask = (rng.random((256, 37)) < 0.7).astype(np.uint8)
    mask[:, offsets[:-1]] = 1
    xs = rng.uniform(0, 40, 4096)
    lp = np.log(np.full(37, 1 / 37))
    u = rng.random(4096)
    return {
        "masked_log_softmax 256x37": lambda k: k.masked_log_softmax(logits, mask, offsets),
        "j0_array 4096": lambda k: k.j0_array(xs),
        "sample_segment x4096": lambda k: [k.sample_segment(lp, 0, 37, v) for v in u],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    found = kernels.backends()
    print(f"active backend: {kernels.BACKEND}; available: {', '.join(found)}")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {b: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) for b, mod in found.items()}
        line = "  ".join(f"{b} {t * 1e3:9.3f} ms" for b, t in times.items())
        speedup = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{name:<28} {line}  speedup {speedup:6.1f}x")


if __name__ == "__main__":
    main()
