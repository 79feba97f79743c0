"""Build script for the optional compiled kernels.

The package works without the extension (a NumPy fallback is selected at
import time); building it makes the forward integrator and the proposal
factor update roughly two orders of magnitude faster, which matters for
the MCMC-heavy workflows.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    numpy = None
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "co2therm._speedups",
                ["src/co2therm/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
else:
    extensions = []

setup(ext_modules=extensions)
