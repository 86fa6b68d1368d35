"""Build script: compiles the optional trial-loop kernel.

The package is pure Python plus one optional Cython extension
(droopmle._kernels). If Cython or a C compiler is unavailable, or
DROOPMLE_NO_EXT is set, the build proceeds without the extension and the
package falls back to the vectorized numpy kernel at import time.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("DROOPMLE_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext = Extension(
            "droopmle._kernels",
            sources=["src/droopmle/_kernels.pyx"],
            include_dirs=[numpy.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
            optional=True,
        )
        ext_modules = cythonize([ext], language_level=3)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
