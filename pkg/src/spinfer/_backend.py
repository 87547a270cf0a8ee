"""Pick the compiled RK4 kernel when available.

Set ``SPINFER_PURE_PYTHON=1`` to force the pure-Python fallback.
"""

import os

from . import _rk4_py

BACKEND = "python"
integrate = _rk4_py.integrate

if os.environ.get("SPINFER_PURE_PYTHON", "").strip() not in ("1", "true", "yes"):
    try:
        from . import _rk4
    except ImportError:
        pass
    else:
        integrate = _rk4.integrate
        BACKEND = "cython"
