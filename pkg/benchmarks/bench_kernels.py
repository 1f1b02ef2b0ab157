"""Compare the compiled and pure-Python LMS kernels.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json]

Times the raw kernels (one leaf public key, one full set of chains) and the
operations built on them (H5 keygen, sign, verify) with each backend swapped
into ``pqtc.lms.core``.
"""

import argparse
import json
import os
import statistics
import time

from pqtc.lms import core
from pqtc.lms import _pykernels
from pqtc.lms.params import LMOTS_SHA256_N32_W8, LMS_SHA256_M32_H5

try:
    from pqtc.lms import _ckernels
except ImportError:
    _ckernels = None


def timed(fn, repeat):
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - t0)
    return statistics.median(runs)


def bench_backend(kernels, repeat):
    ots = LMOTS_SHA256_N32_W8
    I, seed = os.urandom(16), os.urandom(32)
    x = kernels.derive_x(I, 0, seed, ots.p)
    top = (1 << ots.w) - 1
    out = {
        "leaf_public": timed(lambda: kernels.leaf_public(I, 0, seed, ots.p, ots.w), repeat),
        "chain_many": timed(lambda: kernels.chain_many(I, 0, x, [0] * ots.p, [top] * ots.p), repeat),
    }
    saved = core.kernels
    core.kernels = kernels
    try:
        lms, msg = LMS_SHA256_M32_H5, b"firmware image"
        pub, state = core.lms_keygen(lms, ots, I=I, seed=seed)
        out["keygen_h5"] = timed(lambda: core.lms_keygen(lms, ots, I=I, seed=seed), max(1, repeat // 5))
        sig = core.lms_sign(state, msg)
        out["sign"] = timed(lambda: (setattr(state, "q", 0), core.lms_sign(state, msg)), repeat)
        out["verify"] = timed(lambda: core.lms_verify(pub, msg, sig), repeat)
    finally:
        core.kernels = saved
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)

    results = {"python": bench_backend(_pykernels, args.repeat)}
    if _ckernels is not None:
        results["c"] = bench_backend(_ckernels, args.repeat)
    if args.json:
        print(json.dumps(results, indent=2))
        return
    names = list(results["python"])
    print(f"{'operation':<12} {'python ms':>11} {'c ms':>9} {'speedup':>8}")
    for name in names:
        py = results["python"][name] * 1e3
        if "c" in results:
            c = results["c"][name] * 1e3
            print(f"{name:<12} {py:>11.2f} {c:>9.3f} {py / c:>7.1f}x")
        else:
            print(f"{name:<12} {py:>11.2f} {'n/a':>9}")
    if _ckernels is None:
        print("compiled extension not built; only the Python kernels were measured")


if __name__ == "__main__":
    main()
