"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-numpy
fallback is used otherwise.  Set ``SURVMIX_BACKEND=python`` to force the
fallback (e.g. for benchmarking) or ``SURVMIX_BACKEND=compiled`` to fail
loudly when the extension is missing.
"""

from __future__ import annotations

import os

_requested = os.environ.get("SURVMIX_BACKEND", "").strip().lower()

if _requested in ("python", "pure", "py"):
    from . import _kernels_py as _impl

    COMPILED = False
elif _requested in ("", "compiled", "c"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        if _requested:
            raise
        from . import _kernels_py as _impl  # type: ignore[no-redef]

        COMPILED = False
else:
    raise RuntimeError(f"unrecognized SURVMIX_BACKEND value {_requested!r}")

FAMILY_WEIBULL = _impl.FAMILY_WEIBULL
FAMILY_LOGNORMAL = _impl.FAMILY_LOGNORMAL

mixture_loss_grad = _impl.mixture_loss_grad
pair_counts = _impl.pair_counts


def backend_name() -> str:
    return "compiled" if COMPILED else "python"
