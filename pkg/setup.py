"""Build script: compiles the optional scoring kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a missing compiler or Cython only costs speed, never
functionality. Set LSRKIT_NO_EXT=1 to skip the build entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LSRKIT_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "lsrkit._kernels",
                    ["src/lsrkit/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    # -ffp-contract=off: keep mul+add unfused so the compiled
                    # kernel is bit-identical to the numpy fallback.
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
