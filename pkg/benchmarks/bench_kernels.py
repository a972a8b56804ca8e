"""Time the compiled and pure-numpy paths of the two hot loops.

    python benchmarks/bench_kernels.py [--n 400] [--repeat 3]

Set ECG_IDENT_NUMBA=0 to make the library itself use the fallback paths.
The SMO solver runs on one pairwise problem the size of a two-subject training split;
the annotation scanner runs on a 30-minute record's worth of beats.
"""
import argparse
import statistics
import time

import numpy as np

from ecg_ident import ingest
from ecg_ident._accel import HAVE_NUMBA
from ecg_ident.svm import KernelSpec, TrainConfig, solve_dual


def _encode_beats(times):
    # plain beat words with SKIP for long gaps; mirrors the MIT annotation grammar
    out = bytearray()
    t = 0
    for s in times:
        delta = int(s - t)
        if delta > 1023:
            out += bytes([0, 59 << 2]) + bytes([(delta >> 16) & 0xFF, delta >> 24,
                                                 delta & 0xFF, (delta >> 8) & 0xFF])
            delta = 0
        w = (1 << 10) | delta
        out += bytes([w & 0xFF, w >> 8])
        t = s
    return bytes(out) + b"\0\0"


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400, help="training rows in the SMO problem")
    ap.add_argument("--dim", type=int, default=70)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy path can be timed")

    rng = np.random.default_rng(0)
    half = args.n // 2
    X = np.vstack([rng.normal(0.0, 1.0, (half, args.dim)), rng.normal(0.4, 1.0, (args.n - half, args.dim))])
    X /= np.sqrt(args.dim)
    y = np.r_[np.ones(half), -np.ones(args.n - half)]
    spec, cfg = KernelSpec(sigma=0.5), TrainConfig(C=1000.0)

    rows = []
    paths = [("numba", True), ("numpy", False)] if HAVE_NUMBA else [("numpy", False)]
    for name, flag in paths:
        solve_dual(X[:10], y[[0, 1, 2, 3, 4, -1, -2, -3, -4, -5]], spec, cfg, use_numba=flag)  # compile
        res = solve_dual(X, y, spec, cfg, use_numba=flag)
        best, med = _best_of(lambda: solve_dual(X, y, spec, cfg, use_numba=flag), args.repeat)
        rows.append((f"smo n={args.n} d={args.dim}", name, best, med, f"{res[2]} iterations"))

    gaps = rng.integers(200, 400, size=6000)
    gaps[::500] = 5000  # a few long gaps exercise SKIP
    beats = np.cumsum(gaps)
    data = np.frombuffer(_encode_beats(beats), dtype=np.uint8)
    scan = ingest._scan_annotation_words
    scanners = [("numba", scan), ("python", scan.py_func)] if HAVE_NUMBA else [("python", scan)]
    for name, fn in scanners:
        fn(data)
        best, med = _best_of(lambda: fn(data), args.repeat)
        rows.append((f"annotations {len(beats)} beats", name, best, med, ""))

    print(f"{'kernel':<28}{'path':<8}{'best s':>10}{'median s':>10}  note")
    for kernel, name, best, med, note in rows:
        print(f"{kernel:<28}{name:<8}{best:>10.4f}{med:>10.4f}  {note}")
    for kernel in dict.fromkeys(r[0] for r in rows):
        t = {r[1]: r[2] for r in rows if r[0] == kernel}
        slow = [v for k, v in t.items() if k != "numba"]
        if "numba" in t and slow:
            print(f"{kernel}: numba speed-up x{slow[0] / t['numba']:.1f}")


if __name__ == "__main__":
    main()
