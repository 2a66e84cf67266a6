"""Build script: compiles the Cython kernel core when possible.

The compiled extension is optional. If Cython or a C compiler is missing
(set PRUNAS_NO_EXT=1 to force this), the package installs anyway and falls
back to the pure-Python kernels at import time.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PRUNAS_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "prunas._kernels._core",
                    ["src/prunas/_kernels/_core.pyx"],
                    # -ffp-contract=off keeps the C arithmetic bit-compatible
                    # with the pure-Python backend (no FMA contraction).
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
