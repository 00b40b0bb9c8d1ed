"""Build hook for the optional native kernel.

The package is pure Python plus one Cython extension holding the hot
dynamics loops. The extension is marked optional: if Cython or a C
compiler is missing the install proceeds and the package falls back to
the reference backend at import time.

-ffp-contract=off keeps the compiler from fusing multiply-adds so the
native kernel executes the exact same IEEE operation sequence as the
pure-Python reference (bit-identical trajectories, see tests/test_backends.py).
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "multitrack._kernels._native",
        ["src/multitrack/_kernels/_native.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O2", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext.optional = True
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
except ImportError:
    pass

setup(ext_modules=ext_modules)
