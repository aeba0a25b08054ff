"""Build script: compiles the trajectory kernel extension when Cython and a
C compiler are available, otherwise installs pure Python (the package falls
back to the numpy kernels at import time)."""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fibertrap._kernels",
                ["src/fibertrap/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
