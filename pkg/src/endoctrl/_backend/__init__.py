"""Backend selection for the smoothing kernels.

Tries the compiled Cython extension first and falls back to the numpy
reference implementation.  Set ``ENDOCTRL_BACKEND=py`` (or ``c``) to
force a choice; forcing ``c`` raises if the extension is missing.
"""

import os

from ._ref import (  # noqa: F401  (kernel ids shared by both backends)
    EPANECHNIKOV,
    GAUSSIAN,
    monomial_exponents,
)

_forced = os.environ.get("ENDOCTRL_BACKEND", "").lower()

if _forced == "py":
    from . import _ref as _impl
    BACKEND = "python"
elif _forced == "c":
    from . import _core as _impl  # raises ImportError if not built
    BACKEND = "compiled"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        from . import _ref as _impl
        BACKEND = "python"

local_poly_batch = _impl.local_poly_batch
smoothed_cdf_rows = _impl.smoothed_cdf_rows
