"""Backend dispatch for the cylinder hot kernels.

The compiled extension is used when it imports cleanly; setting
VORTEXLAB_PURE=1 (or a failed build) selects the NumPy fallback.  Both
backends implement identical semantics and are compared in
benchmarks/bench_kernels.py and tests/test_kernels.py.
"""

import os

from . import pure

if os.environ.get("VORTEXLAB_PURE") == "1":
    _impl = pure
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND
residual_fields = _impl.residual_fields
slink_energy_density = _impl.slink_energy_density

# always-available reference pieces (shared by both backends)
covariant_ds = pure.covariant_ds
covariant_dt = pure.covariant_dt
