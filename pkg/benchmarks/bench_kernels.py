"""Time the numba and numpy variants of each kernel on representative shapes.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel with the best-of-N wall time of each backend and
checks that both return the same numbers.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from ivspectral import _kernels as kern


def cases(rng):
    n, k, g, p = 500, 250, 1, 20
    yield "ar1_columns", (rng.standard_normal((10_000, 50)), 0.9)
    a_test = rng.standard_normal((n // 5, k))
    yield "cv_fold_errors", (a_test, rng.standard_normal((k, g)), rng.random((p, k)), rng.standard_normal((n // 5, g)))
    yield "prefix_signal_gram", (rng.standard_normal((10_000, 80)), rng.standard_normal((80, 2)), np.array([10, 20, 40, 80]))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not kern.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, raw in cases(rng):
        argv = [np.ascontiguousarray(a) if isinstance(a, np.ndarray) else a for a in raw]
        if name == "prefix_signal_gram":
            argv[2] = argv[2].astype(np.int64)
        fast, slow = getattr(kern, f"nb_{name}"), getattr(kern, f"np_{name}")
        np.testing.assert_allclose(fast(*argv), slow(*argv), rtol=1e-9, atol=1e-9)  # also triggers compilation
        t_np = min(timeit.repeat(lambda: slow(*argv), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: fast(*argv), number=1, repeat=args.repeat))
        print(f"{name:<22}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
