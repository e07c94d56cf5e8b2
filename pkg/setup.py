"""Build the optional Cython kernels; the package falls back to pure Python without them."""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("PROXYAUDIT_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("proxyaudit._ckernels", ["src/proxyaudit/_ckernels.pyx"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
