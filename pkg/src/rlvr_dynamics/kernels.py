"""Backend selection for the alias-method hot path.

The compiled extension is used when it imports; otherwise the pure-Python
fallback. Set ``RLVR_DYNAMICS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from rlvr_dynamics import _alias_py

try:
    from rlvr_dynamics import _alias_ext
except ImportError:  # extension not built
    _alias_ext = None

_BACKENDS = {"python": _alias_py}
if _alias_ext is not None:
    _BACKENDS["compiled"] = _alias_ext

if os.environ.get("RLVR_DYNAMICS_PURE_PYTHON", "") not in ("", "0") or _alias_ext is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"

_impl = _BACKENDS[BACKEND]
build_alias_table = _impl.build_alias_table
alias_draw = _impl.alias_draw


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name):
    """Return the kernel module for ``name`` ("compiled" or "python")."""
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}") from None
