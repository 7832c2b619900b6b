"""Build hook for the optional compiled tape kernel.

If Cython or a C compiler is unavailable the package still installs and runs
on the pure-Python interpreter.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "lorentz_finsler.dsl._tape_kernel",
                ["src/lorentz_finsler/dsl/_tape_kernel.pyx"],
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
