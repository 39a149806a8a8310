"""Hot-kernel dispatch: the compiled core when built, the pure-Python twin otherwise.

Set ``EVSTREAM_PURE_PYTHON=1`` to force the fallback (used by the test suite
and the kernel benchmark to exercise both paths).
"""

import os

from . import _pykernels

IMPLEMENTATION = "python"
_impl = _pykernels

if os.environ.get("EVSTREAM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        IMPLEMENTATION = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

glob_match = _impl.glob_match
split_frames = _impl.split_frames
encode_event = _impl.encode_event
decode_event = _impl.decode_event

ERR_NONE = _pykernels.ERR_NONE
ERR_BAD_MAGIC = _pykernels.ERR_BAD_MAGIC
ERR_VERSION = _pykernels.ERR_VERSION
ERR_TOO_LARGE = _pykernels.ERR_TOO_LARGE
ERR_FRAME_TYPE = _pykernels.ERR_FRAME_TYPE
