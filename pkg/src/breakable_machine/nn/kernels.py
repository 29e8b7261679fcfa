"""Kernel backend selection.

Two implementations share one contract: a compiled Cython extension and a
NumPy fallback. By default the dispatcher is hybrid, using whichever side
measures faster per shape class: BLAS-backed im2col for dense convolutions,
the compiled direct loop for grouped/depthwise ones (where grouped matmul
degenerates into many tiny GEMMs). See benchmarks/bench_forward.py.

BM_KERNELS=python|compiled|auto forces a side; "compiled" raises if the
extension is not built. The fallback alone is always sufficient.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _convkernels as _compiled
except ImportError:
    _compiled = None

_requested = os.environ.get("BM_KERNELS", "auto").strip().lower()
if _requested not in ("auto", "python", "compiled"):
    raise RuntimeError(f"BM_KERNELS must be auto, python, or compiled, not {_requested!r}")
if _requested == "compiled" and _compiled is None:
    raise RuntimeError("BM_KERNELS=compiled but the _convkernels extension is not built")


def _conv2d_hybrid(x, weight, bias, stride, padding, groups):
    if groups > 1:
        return _compiled.conv2d(x, weight, bias, stride, padding, groups)
    return _kernels_py.conv2d(x, weight, bias, stride, padding, groups)


if _requested == "python" or _compiled is None:
    BACKEND = "python"
    conv2d = _kernels_py.conv2d
    relu6 = _kernels_py.relu6
    global_avg_pool = _kernels_py.global_avg_pool
elif _requested == "compiled":
    BACKEND = "compiled"
    conv2d = _compiled.conv2d
    relu6 = _compiled.relu6
    global_avg_pool = _compiled.global_avg_pool
else:
    BACKEND = "hybrid"
    conv2d = _conv2d_hybrid
    relu6 = _compiled.relu6
    global_avg_pool = _compiled.global_avg_pool


def implementations() -> dict:
    """Maps backend name -> kernel module, for tests and benchmarks."""
    impls = {"python": _kernels_py}
    if _compiled is not None:
        impls["compiled"] = _compiled
    return impls
