"""Build script: compiles the optional dynamics kernel extension.

The package is fully functional without the extension (a numpy lane is
selected at import time); the Cython build is skipped when Cython is not
available rather than failing the install.

Float-contraction is disabled so the compiled lane produces bit-identical
results to the pure lane.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "shieldcraft._kernels._stepcore",
                ["src/shieldcraft/_kernels/_stepcore.pyx"],
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
