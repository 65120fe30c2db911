"""Build script: compiles the optional native kernels when Cython is available.

The package is fully functional without the extension; molgrow._kernels
falls back to vectorized numpy implementations at import time.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "molgrow._kernels._native",
                ["src/molgrow/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"native kernels skipped ({exc}); numpy fallback will be used")

setup(ext_modules=ext_modules)
