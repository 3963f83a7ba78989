"""Masked non-negative tensor factorization of match logs, with an MLP decoder.

The heavy lifting lives in the compiled ``_core`` extension; this package
just re-exports it. In an installed wheel ``_core`` sits inside the package;
in a development tree it is picked up from ``sys.path`` (point PYTHONPATH at
the CMake build's ``bindings/`` directory).
"""

import sys as _sys

try:
    from ctxfactor import _core as _core  # installed layout
except ImportError:  # development layout: bare module on sys.path
    import _core  # type: ignore

    _sys.modules[__name__ + "._core"] = _core

_names = [n for n in dir(_core) if not n.startswith("_")]
globals().update({n: getattr(_core, n) for n in _names})

__all__ = _names
__doc__ = _core.__doc__
__version__ = "0.1.0"
