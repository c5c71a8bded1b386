"""Build script for the compiled integrator kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed cythonization is tolerated rather than fatal.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "so3sync._kernels._core",
                ["src/so3sync/_kernels/_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
