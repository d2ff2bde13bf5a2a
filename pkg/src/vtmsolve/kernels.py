"""Kernel backend selection.

Prefers the compiled Cython sweeps, falling back to the pure-python
implementation when the extension was not built. Set VTM_KERNELS=py to
force the fallback (used by tests and the kernel benchmark).
"""

import logging
import os

log = logging.getLogger("vtmsolve")

_forced = os.environ.get("VTM_KERNELS", "auto").strip().lower()

if _forced in ("py", "python", "fallback"):
    from . import _kernels_py as _impl
    HAVE_COMPILED = False
elif _forced in ("auto", "", "c", "compiled"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        HAVE_COMPILED = True
    except ImportError:
        if _forced in ("c", "compiled"):
            raise ImportError("VTM_KERNELS=c requested but the compiled "
                              "kernels are not built")
        from . import _kernels_py as _impl  # type: ignore[no-redef]
        HAVE_COMPILED = False
        log.info("compiled kernels unavailable; using pure-python sweeps")
else:
    raise ValueError(f"unrecognized VTM_KERNELS value '{_forced}'")

sor_sweep = _impl.sor_sweep


def backend_name() -> str:
    return "compiled" if HAVE_COMPILED else "python"
