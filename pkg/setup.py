"""Build script: compiles the optional Cython kernel extension when possible.

The package works without the extension (a numpy fallback is selected at
import time), so any failure here degrades to a pure-Python install rather
than aborting.
"""

import os

from setuptools import Extension, setup

extensions = []
if not os.environ.get("XPROBE_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        extensions = cythonize(
            [
                Extension(
                    "xprobe._compiled_kernels",
                    ["src/xprobe/_compiled_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        extensions = []

setup(ext_modules=extensions)
