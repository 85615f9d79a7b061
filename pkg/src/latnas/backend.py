"""Kernel backend selection.

The hot per-step kernels (categorical sampling, policy updates, latency
sums, rejection scans) exist twice: a compiled Cython extension and a
pure-Python fallback with identical numerics. The compiled one is used
when importable; ``TUNAS_BACKEND=pure`` or ``TUNAS_BACKEND=compiled``
forces the choice.
"""

from __future__ import annotations

import os

_requested = os.environ.get("TUNAS_BACKEND", "auto").strip().lower() or "auto"

if _requested == "pure":
    from . import _kernels_py as kernels

    BACKEND = "pure"
elif _requested == "compiled":
    from . import _kernels as kernels  # type: ignore[no-redef]

    BACKEND = "compiled"
elif _requested == "auto":
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]

        BACKEND = "pure"
else:
    raise RuntimeError(f"TUNAS_BACKEND={_requested!r}; expected pure, compiled, or auto")


def compiled_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True


def load_backend(name: str):
    """Load a specific kernel module (for parity tests and benchmarks)."""
    if name == "pure":
        from . import _kernels_py

        return _kernels_py
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
