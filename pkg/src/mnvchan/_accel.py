"""Backend selection for the hot kernels.

Set ``MNVCHAN_DISABLE_NUMBA=1`` to force the pure-numpy code paths. Numba is
also skipped silently when it cannot be imported.
"""

import os

_FLAG = os.environ.get("MNVCHAN_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

HAVE_NUMBA = False
if not DISABLED:
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:
        pass

BACKEND = "numba" if HAVE_NUMBA else "numpy"
