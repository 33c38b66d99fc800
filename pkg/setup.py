"""Build the optional Cython core; the package falls back to pure Python without it."""

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("GOE_FLUCT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "goe_fluct._core",
                    ["src/goe_fluct/_core.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: keeps the RNG bit-identical to the fallback
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
