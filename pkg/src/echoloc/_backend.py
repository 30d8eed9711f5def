"""Kernel selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
NumPy versions in ``_pykernels``. Setting ``ECHOLOC_PURE_PYTHON=1`` forces
the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("ECHOLOC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"

emg_model_jacobian = kernels.emg_model_jacobian
mlp_forward = kernels.mlp_forward
mlp_backward = kernels.mlp_backward
lm_fit = kernels.lm_fit
