"""Build script for the optional compiled convolution kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed build of the Cython module is not fatal for
installation from source without Cython.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "risce.kernels._conv_cy",
                ["src/risce/kernels/_conv_cy.pyx"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
