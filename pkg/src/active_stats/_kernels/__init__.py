"""Backend selection for the sandwich-variance hot kernel.

The compiled extension is preferred when built; the numpy fallback is
functionally identical.  Set ``ACTIVE_STATS_KERNEL=python`` or
``=cython`` to force a backend (the latter raises if the extension is
missing).  ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

from . import _sandwich_np

_requested = os.environ.get("ACTIVE_STATS_KERNEL", "auto").lower()

if _requested not in ("auto", "cython", "python"):
    raise RuntimeError(
        f"ACTIVE_STATS_KERNEL={_requested!r} not one of auto|cython|python")

if _requested == "python":
    psi_gram = _sandwich_np.psi_gram
    BACKEND = "python"
else:
    try:
        from . import _sandwich_cy

        psi_gram = _sandwich_cy.psi_gram
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        psi_gram = _sandwich_np.psi_gram
        BACKEND = "python"


def available_backends() -> dict:
    """Name -> kernel callable for every importable backend."""
    backends = {"python": _sandwich_np.psi_gram}
    try:
        from . import _sandwich_cy

        backends["cython"] = _sandwich_cy.psi_gram
    except ImportError:
        pass
    return backends
