"""Image restoration by half-quadratic splitting with learned proximal operators."""

import importlib
import os
import sys

_override = os.environ.get("PSNCORE_MODULE_DIR")
if _override and _override not in sys.path:
    sys.path.insert(0, _override)

try:
    _core = importlib.import_module("._psncore", __name__)   # installed layout
except ImportError:
    _core = importlib.import_module("_psncore")              # in-build layout

_names = [n for n in dir(_core) if not n.startswith("_")]
globals().update({n: getattr(_core, n) for n in _names})
__all__ = _names
