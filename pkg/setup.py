from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "transmon_lab._propagate",
        sources=["src/transmon_lab/_propagate.pyx"],
        include_dirs=["src/transmon_lab"],
        extra_compile_args=["-O3", "-march=native", "-ffast-math"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
