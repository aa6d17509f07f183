"""Kernel backend selection: compiled Cython core with a numpy fallback.

The compiled module is preferred when importable; set TEXRAST_KERNELS to
"python" or "compiled" to force a backend (forcing "compiled" raises if the
extension was not built).
"""

from __future__ import annotations

import os

from . import _kernels_py


def _select():
    choice = os.environ.get("TEXRAST_KERNELS", "auto")
    if choice not in ("auto", "python", "compiled"):
        raise ValueError(f"TEXRAST_KERNELS must be auto|python|compiled, got {choice!r}")
    if choice == "python":
        return _kernels_py
    try:
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    except ImportError:
        if choice == "compiled":
            raise
        return _kernels_py


kernels = _select()
KERNEL_BACKEND: str = kernels.BACKEND_NAME


def available_backends() -> dict[str, object]:
    """Importable kernel modules by name (used by the benchmark)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        out["compiled"] = _kernels
    except ImportError:
        pass
    return out
