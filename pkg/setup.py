import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fallback kernels only
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("EULER_NO_EXT"):
    flags = ["-O3", "-fno-math-errno", "-fassociative-math", "-fno-signed-zeros", "-fno-trapping-math"]
    if not os.environ.get("EULER_NO_NATIVE"):
        flags.append("-march=native")
    ext_modules = cythonize(
        [
            Extension(
                "eulernet._kernels",
                ["src/eulernet/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=flags,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
