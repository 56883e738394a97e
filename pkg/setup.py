"""Build script: compiles the optional Cython edge kernels when possible.

The package is fully functional without the extension (a vectorized numpy
fallback is selected at import time); the extension speeds up the per-edge
cost/gradient inner loop that dominates long simulation runs.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "asyncpgo.kernels._edge_cy",
                sources=["src/asyncpgo/kernels/_edge_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass  # no Cython: install as pure python, numpy fallback is used

setup(ext_modules=ext_modules)
