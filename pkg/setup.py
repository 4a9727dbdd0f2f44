import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled kernel core is optional: if the extension fails to build the
# package still installs and falls back to the numpy kernels at import time.
extensions = [
    Extension(
        "proca._kernels._cy_impl",
        ["src/proca/_kernels/_cy_impl.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
