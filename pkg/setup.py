"""Build the optional Cython kernels.

The package works without them; ``mirtmis._kernels`` falls back to the numpy
implementation when the extension is missing.
"""
import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("MIRTMIS_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "mirtmis._kernels._core",
                ["src/mirtmis/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": 3},
        annotate=False,
    )

setup(ext_modules=ext_modules)
