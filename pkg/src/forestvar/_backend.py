"""Tree-kernel backend selection.

The compiled extension is preferred; set ``FORESTVAR_PURE_PYTHON=1`` to force
the pure-Python fallback (used by the benchmark and the equality tests).
"""

import os

if os.environ.get("FORESTVAR_PURE_PYTHON", "") not in ("", "0"):
    from . import _treecore_py as core
else:
    try:
        from . import _treecore as core  # type: ignore[attr-defined]
    except ImportError:
        from . import _treecore_py as core

BACKEND = core.BACKEND_NAME


def get_core(name=None):
    """Return a specific backend module ("compiled" or "python")."""
    if name is None or name == BACKEND:
        return core
    if name == "python":
        from . import _treecore_py

        return _treecore_py
    if name == "compiled":
        from . import _treecore  # raises ImportError if unavailable

        return _treecore
    raise ValueError(f"unknown backend {name!r}")
