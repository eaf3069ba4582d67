"""Build script: compiles the optional Cython kernel core.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile only costs speed, not functionality.
Set LEAFTRACK_SKIP_EXT=1 to install pure-Python on purpose.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LEAFTRACK_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            "src/leaftrack/_kernels/_core.pyx",
            language_level=3,
        )
        for ext in ext_modules:
            ext.include_dirs.append(numpy.get_include())
            ext.define_macros.append(("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION"))
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
