"""Kernel backend selection.

The compiled extension ``exitmc._core`` is used when it imports; otherwise,
or when ``EXITMC_BACKEND=python`` is set, the numpy kernels in
``exitmc._fallback`` are used.  Both expose ``em_block``, ``wos_block`` and
``normals_block`` with the same signatures.
"""

import os

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_ALIASES = {"python": "python", "numpy": "python", "fallback": "python",
            "compiled": "compiled", "cython": "compiled"}


def _default():
    want = _ALIASES.get(os.environ.get("EXITMC_BACKEND", "").lower())
    if want == "python" or _core is None:
        return "python"
    return "compiled"


ACTIVE = _default()


def available() -> list[str]:
    return ["compiled", "python"] if _core is not None else ["python"]


def kernels(name: str | None = None):
    """Kernel module for ``name`` (default: the active backend)."""
    name = ACTIVE if name is None else _ALIASES.get(name, name)
    if name == "compiled":
        if _core is None:
            raise ImportError("exitmc._core is not built; reinstall with Cython available")
        return _core
    if name == "python":
        return _fallback
    raise ValueError(f"unknown backend {name!r}")


def set_backend(name: str) -> None:
    global ACTIVE
    kernels(name)
    ACTIVE = _ALIASES.get(name, name)
