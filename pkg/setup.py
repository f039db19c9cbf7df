"""Build script for the optional compiled simulation kernel.

The package works without the extension (a pure-Python kernel is selected at
import), so a missing compiler or Cython only skips the build.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:  # build tools unavailable: install the pure-Python package
    ext_modules = []
else:
    extensions = [
        Extension(
            "luckock._kernel",
            ["src/luckock/_kernel.pyx"],
            include_dirs=[numpy.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
            optional=True,
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )

setup(ext_modules=ext_modules)
