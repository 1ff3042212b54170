"""Time the compiled kernels against their NumPy fallbacks.

    python3 benchmarks/bench_kernels.py [--n 1000000] [--repeat 5]
"""

import argparse
import sys
import timeit
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from _inputs import kernel_cases  # noqa: E402
from levygmm import kernels  # noqa: E402


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=0)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=10 ** 6)
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args(argv)
    if kernels.compiled is None:
        print("compiled extension not available; only the NumPy fallback is importable")
        return 1
    cases = kernel_cases(a.n)
    print(f"{'kernel':<22}{'numpy ms':>11}{'compiled ms':>13}{'speedup':>9}  agree")
    for name, args in cases.items():
        fb, cc = getattr(kernels.fallback, name), getattr(kernels.compiled, name)
        t_fb = min(timeit.repeat(lambda: fb(*args), number=1, repeat=a.repeat)) * 1e3
        t_cc = min(timeit.repeat(lambda: cc(*args), number=1, repeat=a.repeat)) * 1e3
        print(f"{name:<22}{t_fb:>11.2f}{t_cc:>13.2f}{t_fb / t_cc:>9.2f}  {_same(fb(*args), cc(*args))}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
