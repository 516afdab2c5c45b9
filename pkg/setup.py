import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "idlalab._kernels",
        ["src/idlalab/_kernels.pyx"],
        include_dirs=[np.get_include()],
        language="c++",
        # ffp-contract=off: the compiled kernels must match the pure
        # python path bit-for-bit; fused multiply-adds would not.
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
            "language_level": "3",
        },
    )
)
