"""Build the optional Cython kernel module.

The package works without it; ``evforest.backend`` falls back to the numpy
implementations when ``evforest._kernels`` cannot be imported.
"""
import os
import sys

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("EVFOREST_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        if sys.platform == "win32":
            omp_compile, omp_link = ["/openmp"], []
        else:
            omp_compile, omp_link = ["-fopenmp"], ["-fopenmp"]
        extensions = [
            Extension(
                "evforest._kernels",
                ["src/evforest/_kernels.pyx"],
                extra_compile_args=["-O3"] + omp_compile,
                extra_link_args=omp_link,
                optional=True,
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        print("Cython not available; installing pure-Python fallback only")

setup(ext_modules=ext_modules)
