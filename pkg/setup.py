import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; exitmc falls back to the numpy kernels
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("EXITMC_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "exitmc._core",
                ["src/exitmc/_core.pyx"],
                include_dirs=[np.get_include()],
                # no -ffast-math / -march=native: the kernel must reproduce the
                # numpy fallback's IEEE arithmetic operation for operation
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
