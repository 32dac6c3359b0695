"""Select the compiled boosting kernels, falling back to pure Python.

Set ``EMABOOST_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("EMABOOST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

boost_main = _impl.boost_main
boost_pairs = _impl.boost_pairs
fast_strengths = _impl.fast_strengths


def use_backend(name):
    """Switch backends at runtime ("cython" or "python"); returns the previous one."""
    global _impl, BACKEND, boost_main, boost_pairs, fast_strengths
    prev = BACKEND
    if name == "python":
        _impl = _kernels_py
    elif name == "cython":
        from . import _kernels as _compiled
        _impl = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    boost_main, boost_pairs, fast_strengths = _impl.boost_main, _impl.boost_pairs, _impl.fast_strengths
    return prev
