"""Build script for the optional compiled kernel.

The package is pure Python apart from one Cython extension holding the
hot kernel of the sandwich-variance computation.  If Cython or a C
compiler is unavailable the build still succeeds and the package falls
back to the numpy implementation at import time.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/active_stats/_kernels/_sandwich_cy.pyx",
        compiler_directives={"language_level": "3"},
    )
    include_dirs = [numpy.get_include()]
    for ext in ext_modules:
        ext.include_dirs = include_dirs
except ImportError:
    pass

setup(ext_modules=ext_modules)
