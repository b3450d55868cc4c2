"""Per-criterion outcomes collected by the acceptance suite."""

import time
from contextlib import contextmanager

RESULTS = {}


@contextmanager
def criterion(n, title, limit_s=None):
    """Record PASS/FAIL for criterion ``n``; details go into the yielded dict."""
    info = {"detail": ""}
    t0 = time.perf_counter()
    try:
        yield info
        elapsed = time.perf_counter() - t0
        if limit_s is not None:
            assert elapsed < limit_s, f"runtime {elapsed:.1f} s exceeds {limit_s} s"
    except BaseException as exc:
        RESULTS[n] = (False, title, f"{info['detail']} {type(exc).__name__}: {exc}".strip().splitlines()[0])
        raise
    RESULTS[n] = (True, title, f"{info['detail']} ({time.perf_counter() - t0:.1f} s)".strip())
