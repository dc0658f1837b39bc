"""Build script; the Cython kernels are optional and fall back to numpy."""
import os

import numpy as np
from setuptools import Extension, setup


def _extensions():
    if os.environ.get("EPMFLUX_NO_EXT") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "epmflux.numkernel._ckernels",
        ["src/epmflux/numkernel/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
