import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sparsrec._accel",
                ["src/sparsrec/_accel.pyx"],
                include_dirs=[np.get_include()],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-Python fallback kernel is used when the extension is absent.
    ext_modules = []

setup(ext_modules=ext_modules)
