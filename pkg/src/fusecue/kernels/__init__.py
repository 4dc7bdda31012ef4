"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; setting
``FUSECUE_PURE_PYTHON=1`` forces the fallback. ``BACKEND`` names the choice.
"""

import os

from . import _pykernels as python

try:
    if os.environ.get("FUSECUE_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as compiled
except ImportError:
    compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

im2col = _impl.im2col
col2im = _impl.col2im
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward
lbp_codes = _impl.lbp_codes

__all__ = [
    "BACKEND",
    "compiled",
    "python",
    "im2col",
    "col2im",
    "maxpool2_forward",
    "maxpool2_backward",
    "lbp_codes",
]
