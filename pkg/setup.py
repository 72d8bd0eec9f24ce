import os
import sys

from setuptools import setup

# The compiled kernels are an optional speedup: the package falls back to the
# numpy implementations in conesq._core.np_backend when the extension is
# missing, so a failed compile must not fail the install.
ext_modules = []
if os.environ.get("CONESQ_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext = Extension(
            "conesq._core._speedups",
            ["src/conesq/_core/_speedups.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], language_level=3)
    except Exception as exc:  # pragma: no cover
        sys.stderr.write(f"conesq: building without compiled kernels ({exc})\n")
        ext_modules = []

setup(ext_modules=ext_modules)
