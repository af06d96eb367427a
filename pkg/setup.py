import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "mixcomp._core.ckernels",
        ["src/mixcomp/_core/ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

# The compiled core is an accelerator, not a requirement: without Cython the
# package installs pure-Python and mixcomp._core falls back at import time.
setup(ext_modules=cythonize(extensions, language_level=3) if cythonize else [])
