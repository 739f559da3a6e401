"""Ray kernel backend selection.

The compiled extension is used when it was built; otherwise, or when
``SPECGAIN_PURE_PYTHON`` is set to a non-empty value other than ``0``, the
pure-Python implementation is loaded.  Both expose the same functions.
"""

import os

if os.environ.get("SPECGAIN_PURE_PYTHON", "") not in ("", "0"):
    from ._pykernels import *  # noqa: F401,F403
    from ._pykernels import BACKEND
else:
    try:
        from ._kernels import *  # noqa: F401,F403
        from ._kernels import BACKEND
    except ImportError:
        from ._pykernels import *  # noqa: F401,F403
        from ._pykernels import BACKEND

from . import _pykernels as python_backend  # noqa: E402


def compiled_backend():
    """Return the compiled module, or ``None`` if it is not built."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


__all__ = [
    "BACKEND",
    "traverse",
    "cast_rays",
    "apply_observation",
    "rollforward",
    "expected_gain",
    "footprint_cells",
    "python_backend",
    "compiled_backend",
]
