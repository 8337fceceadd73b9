"""Build the optional Cython kernels.

If Cython or a C compiler is missing the package still installs and
``hopflink.kernels`` falls back to the numpy implementations.
"""
import os

import numpy as np
from setuptools import setup

ext_modules = []
if os.environ.get("HOPFLINK_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "hopflink._kernels",
                    ["src/hopflink/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
