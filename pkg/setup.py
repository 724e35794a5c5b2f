"""Build the optional compiled kernels; the package imports a pure-Python
fallback when the extension is absent."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("MGSPECTRAL_NO_EXT", "") not in ("1", "true", "yes"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "mgspectral._ckernels",
                    ["src/mgspectral/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3", "boundscheck": False,
                                 "wraparound": False, "cdivision": True},
        )

setup(ext_modules=ext_modules)
