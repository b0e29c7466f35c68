import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

setup(
    ext_modules=cythonize(
        [
            Extension(
                "qubursts.kernels._accel",
                ["src/qubursts/kernels/_accel.pyx"],
                include_dirs=[numpy.get_include()],
                # fp-contract off: the reference backend must match bit-for-bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
)
