"""Backend selection for the hot scan kernels.

The compiled extension ``rdmd._kernels`` is used when it imports; otherwise the
NumPy/SciPy implementation in ``rdmd._kernels_py`` takes over.  Setting
``RDMD_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("RDMD_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
tri_sigma_min_scan = (_compiled or _kernels_py).tri_sigma_min_scan
python_tri_sigma_min_scan = _kernels_py.tri_sigma_min_scan
compiled_tri_sigma_min_scan = _compiled.tri_sigma_min_scan if _compiled is not None else None
