"""Hot-kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``SEQDG_PURE_PYTHON=1`` to force the numpy fallback at import time, or call
:func:`use_backend` at runtime (the benchmark does this).
"""
import os
import types

from . import _fallback

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = ("im2col", "col2im", "layer_norm_forward", "layer_norm_backward")

active = types.SimpleNamespace()


def available_backends() -> list:
    return ["numpy"] + (["compiled"] if _ckernels is not None else [])


def use_backend(name: str) -> None:
    if name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; run `python setup.py build_ext --inplace`")
        module = _ckernels
    elif name == "numpy":
        module = _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    for fn in _NAMES:
        setattr(active, fn, getattr(module, fn))
    active.name = name


def backend() -> str:
    return active.name


use_backend("compiled" if _ckernels is not None and not os.environ.get("SEQDG_PURE_PYTHON") else "numpy")
