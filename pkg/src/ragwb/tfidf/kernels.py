"""Selects the scoring kernel: compiled extension or pure Python.

The compiled module is optional; installs without a C toolchain fall
back silently. Set ``RAGWB_PURE_PYTHON=1`` to force the fallback, which
is how the two are benchmarked against each other.
"""

from __future__ import annotations

import logging
import os

logger = logging.getLogger(__name__)

if os.environ.get("RAGWB_PURE_PYTHON"):
    from ._scan_py import scan

    KERNEL = "python"
else:
    try:
        from ._scan import scan  # type: ignore[no-redef]

        KERNEL = "compiled"
    except ImportError:
        from ._scan_py import scan  # type: ignore[no-redef]

        KERNEL = "python"
        logger.debug("compiled scan kernel unavailable, using pure Python")


def kernel_name() -> str:
    """Which scan implementation is active: 'compiled' or 'python'."""
    return KERNEL


__all__ = ["scan", "kernel_name", "KERNEL"]
