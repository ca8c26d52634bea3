import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "rlvr_dynamics._alias_ext",
        ["src/rlvr_dynamics/_alias_ext.pyx"],
        include_dirs=[np.get_include()],
        # no FMA contraction: keeps results identical to the Python fallback
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
