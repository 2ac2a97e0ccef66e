import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SURVMIX_PURE", "0") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "survmix._kernels",
                    ["src/survmix/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython available: install the pure-python fallback only.
        ext_modules = []

setup(ext_modules=ext_modules)
