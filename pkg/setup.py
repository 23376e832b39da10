"""Build script for the optional compiled kernel core.

The extension is skipped when STASIM_NO_EXT=1 so the package still installs on
hosts without a C toolchain; stasim.backend then falls back to the pure-Python
kernels at import time.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("STASIM_NO_EXT", "0") != "1":
    from Cython.Build import cythonize
    import numpy as np

    ext = Extension(
        "stasim._kernels",
        sources=["src/stasim/_kernels.pyx"],
        include_dirs=[np.get_include()],
        # -ffp-contract=off: the fallback kernels must be bit-identical, so the
        # compiler must not fuse a*b+c into FMA.
        extra_compile_args=["-O2", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
