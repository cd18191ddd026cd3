"""Build script for the optional compiled simplex kernel.

The package is pure Python except for hintfabric._simplex, a Cython
translation of the pivot loop in hintfabric._simplex_py. If the extension
fails to build (no compiler, no Cython) the package still installs and
falls back to the Python kernel at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "hintfabric._simplex",
                ["src/hintfabric/_simplex.pyx"],
                # Keep float semantics identical to the numpy fallback:
                # no fused multiply-add, no fast-math reassociation.
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
