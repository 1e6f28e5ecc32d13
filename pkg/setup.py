"""Build script for the optional compiled stage-1 kernel.

The package is fully functional without the extension (a NumPy fallback is
selected at import time). Build the fast kernel in place with:

    python setup.py build_ext --inplace
"""

import os

from setuptools import Extension, setup

import numpy as np

# the C distributions (ziggurat normal fill) live in numpy's static lib
_npyrandom_dir = os.path.join(os.path.dirname(np.random.__file__), "lib")

extensions = [
    Extension(
        "mindex._kernels._stage1_cy",
        ["src/mindex/_kernels/_stage1_cy.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[_npyrandom_dir],
        libraries=["npyrandom"],
        extra_compile_args=["-O3"],  # no -ffast-math: must stay a bit-faithful twin
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(extensions, language_level="3")
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
