import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("GAITDIFF_PURE_PYTHON") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "gaitdiff._kernels",
                    ["src/gaitdiff/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        # No Cython/numpy at build time: install the pure-python fallback only.
        ext_modules = []

setup(ext_modules=ext_modules)
