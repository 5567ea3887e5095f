from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "eipnet._kernels._core",
        ["src/eipnet/_kernels/_core.pyx"],
        extra_compile_args=["-O3", "-march=native", "-fopenmp"],
        extra_link_args=["-fopenmp"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
