"""Select the compiled kernels when available, else the pure-Python twin.

Set ``GOE_FLUCT_BACKEND=python`` to force the fallback.
"""

import os

impl = None
NAME = "python"

if os.environ.get("GOE_FLUCT_BACKEND", "").lower() != "python":
    try:
        from goe_fluct import _core as impl

        NAME = "cython"
    except ImportError:  # extension not built
        impl = None

if impl is None:
    from goe_fluct import _fallback as impl

mix64 = impl.mix64
stream_key = impl.stream_key
fill_normals = impl.fill_normals
tridiag_ql = impl.tridiag_ql
