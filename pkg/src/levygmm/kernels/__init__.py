"""Kernel dispatch: the compiled extension when available, NumPy otherwise.

Set ``LEVYGMM_PURE_PYTHON=1`` to force the NumPy path.
"""

import os

from . import _fallback as fallback

compiled = None
if os.environ.get("LEVYGMM_PURE_PYTHON", "") != "1":
    try:
        from . import _core as compiled
    except ImportError:
        compiled = None

BACKEND = "compiled" if compiled is not None else "numpy"
_impl = compiled if compiled is not None else fallback

cms_transform = _impl.cms_transform
bump = _impl.bump
default_moment_sums = _impl.default_moment_sums
inversion_spectrum = _impl.inversion_spectrum

__all__ = ["BACKEND", "bump", "cms_transform", "compiled", "default_moment_sums", "fallback",
           "inversion_spectrum"]
