"""Hot-kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback gives
identical results. Set LIPNETS_FORCE_FALLBACK=1 to skip the extension (used by
the backend-parity tests and the benchmark).
"""

import os

if os.environ.get("LIPNETS_FORCE_FALLBACK"):
    from . import _numpy as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _ext as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import _numpy as _impl

        BACKEND = "numpy"

polyline_nearest = _impl.polyline_nearest
crossing_parity = _impl.crossing_parity
groupsort2 = _impl.groupsort2


def using_compiled() -> bool:
    return BACKEND == "compiled"
