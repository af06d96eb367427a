"""Backend selection for the hot log-joint kernels.

Two interchangeable implementations exist: a compiled Cython extension
(``ckernels``) and a pure-numpy fallback (``pykernels``).  At import time
the compiled one is preferred when present.  Set ``MIXCOMP_BACKEND=c`` or
``MIXCOMP_BACKEND=python`` to force a choice; forcing ``c`` when the
extension is missing raises ImportError instead of silently falling back.
"""

import os

from . import pykernels

try:
    from . import ckernels as _ckernels
except ImportError:
    _ckernels = None

_FORCED = os.environ.get("MIXCOMP_BACKEND", "").strip().lower()

if _FORCED == "c":
    if _ckernels is None:
        raise ImportError(
            "MIXCOMP_BACKEND=c requested but the compiled extension "
            "mixcomp._core.ckernels is not importable"
        )
    kernels = _ckernels
    BACKEND = "c"
elif _FORCED == "python":
    kernels = pykernels
    BACKEND = "python"
elif _FORCED:
    raise ImportError(
        f"unknown MIXCOMP_BACKEND={_FORCED!r}; expected 'c' or 'python'"
    )
elif _ckernels is not None:
    kernels = _ckernels
    BACKEND = "c"
else:
    kernels = pykernels
    BACKEND = "python"

smcm_logjoint_grad = kernels.smcm_logjoint_grad
hmcm_logjoint_grad = kernels.hmcm_logjoint_grad


def backend_name() -> str:
    """Name of the backend selected at import, 'c' or 'python'."""
    return BACKEND


def available_backends() -> list:
    """Backends importable in this environment, compiled first."""
    out = []
    if _ckernels is not None:
        out.append("c")
    out.append("python")
    return out


def get_kernels(name: str):
    """Fetch a specific backend module by name, for tests and benchmarks."""
    if name == "python":
        return pykernels
    if name == "c":
        if _ckernels is None:
            raise ImportError("compiled backend not available")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
