"""Hot-kernel backend selection.

Imports the compiled core when available, otherwise the NumPy fallback.
Set LEAFTRACK_NO_EXT=1 to force the fallback. Both backends produce
bit-identical output; the compiled one is just faster.
"""

import os

if os.environ.get("LEAFTRACK_NO_EXT"):
    from . import _ref as _impl
else:
    try:
        from . import _core as _impl
    except ImportError:
        from . import _ref as _impl

BACKEND = _impl.BACKEND_NAME

distance_field = _impl.distance_field
point_costs = _impl.point_costs
translation_scan = _impl.translation_scan
warp_mask_nn = _impl.warp_mask_nn
