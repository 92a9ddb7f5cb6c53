"""Build script: compiles the optional scoring kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); set LATEVID_PURE_PYTHON=1 to skip compilation.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("LATEVID_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "latevid._mmskern",
                    ["src/latevid/_mmskern.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
