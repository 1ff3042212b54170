import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from levygmm import kernels

sys.path.insert(0, str(Path(__file__).parents[1] / "benchmarks"))
from _inputs import kernel_cases  # noqa: E402


@pytest.mark.skipif(kernels.compiled is None, reason="compiled extension not built")
@pytest.mark.parametrize("name", ["cms_transform", "bump", "default_moment_sums", "inversion_spectrum"])
def test_compiled_matches_fallback(name):
    args = kernel_cases(20000, seed=4)[name]
    a = getattr(kernels.compiled, name)(*args)
    b = getattr(kernels.fallback, name)(*args)
    for x, y in zip(a, b) if isinstance(a, tuple) else [(a, b)]:
        assert np.allclose(x, y, rtol=1e-12, atol=1e-300)


def test_environment_forces_fallback():
    env = dict(os.environ, LEVYGMM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from levygmm import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
