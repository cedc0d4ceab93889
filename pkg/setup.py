import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # sdist without Cython: the package falls back to numpy kernels
    cythonize = None

# No -ffast-math: sums are never reassociated, so a given build is
# bit-reproducible.  -fno-trapping-math lets the branch-free exp loops vectorize.
# EPICAST_PORTABLE=1 omits -march=native for redistributable builds.
compile_args = ["-O3", "-fno-trapping-math"]
if not os.environ.get("EPICAST_PORTABLE"):
    compile_args.append("-march=native")

ext_modules = []
if cythonize is not None and not os.environ.get("EPICAST_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "epicast.gru._kernels",
                ["src/epicast/gru/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=compile_args,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
