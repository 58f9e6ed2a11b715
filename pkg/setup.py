from setuptools import Extension, setup
from Cython.Build import cythonize

ext_module = Extension(
    "dagcn.kernels._speedups",
    ["src/dagcn/kernels/_speedups.pyx"],
)

setup(
    ext_modules=cythonize([ext_module], language_level="3"),
)
