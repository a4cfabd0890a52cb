"""Build script for the optional compiled kernels.

The extension is marked optional: if Cython or a C compiler is missing the
package still installs and runs on the pure numpy kernels.
"""
import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - fallback install
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "sppdm._kernels_ext",
                ["src/sppdm/_kernels_ext.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no contraction into FMA: keeps the elementwise kernels
                # bit-identical to the numpy fallback
                extra_compile_args=["-O2", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
