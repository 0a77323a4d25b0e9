import os

from setuptools import setup

ext_modules = []
if os.environ.get("VALVE4D_SKIP_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "valve4d._kernels._native",
                    ["src/valve4d/_kernels/_native.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # No Cython/NumPy at build time: install pure-Python; the package
        # falls back to the NumPy kernels at import.
        ext_modules = []

setup(ext_modules=ext_modules)
