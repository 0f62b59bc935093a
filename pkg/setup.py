"""Build script for the optional compiled hash kernels.

The package works without the extension: ``manifestd._kernels`` falls back to
the pure-Python backend when ``manifestd._kernels._core`` is absent.  Any
failure here (no Cython, no C toolchain, no OpenSSL headers) therefore
downgrades to a warning instead of aborting the install.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: compiled kernels skipped ({exc!r}); "
            "using the pure-Python backend",
            file=sys.stderr,
        )


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython not available; compiled kernels skipped", file=sys.stderr)
        return []
    return cythonize(
        [
            Extension(
                "manifestd._kernels._core",
                ["src/manifestd/_kernels/_core.pyx"],
                libraries=["crypto"],
                extra_compile_args=["-O2"],
            )
        ],
        language_level="3",
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
