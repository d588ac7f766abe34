"""Backend selection for the tree kernels.

The compiled extension is used when importable; set ``RTBCOST_PURE=1`` to
force the NumPy implementation.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
build_tree = _kernels_py.build_tree
apply_tree = _kernels_py.apply_tree

if not os.environ.get("RTBCOST_PURE"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        build_tree = _compiled.build_tree
        apply_tree = _compiled.apply_tree


def get_backend(name: str):
    """Return ``(build_tree, apply_tree)`` for an explicit backend name."""
    if name == "python":
        return _kernels_py.build_tree, _kernels_py.apply_tree
    if name == "cython":
        from . import _kernels as compiled

        return compiled.build_tree, compiled.apply_tree
    raise ValueError(f"unknown backend {name!r}")
