"""Build script for the compiled scoring kernel.

The package works without the extension (a pure-Python kernel is selected
at import time), so a failed compile only costs speed. Set RAGWB_NO_EXT=1
to skip the extension entirely.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Try to build the extension; fall back to pure Python on failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, headers missing, ...
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._skip(exc)

    @staticmethod
    def _skip(exc):
        print(f"warning: building the scan extension failed ({exc}); "
              "falling back to the pure-Python kernel")


ext_modules = []
if not os.environ.get("RAGWB_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("ragwb.tfidf._scan", ["src/ragwb/tfidf/_scan.pyx"])],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        print("warning: Cython not available; using the pure-Python kernel")

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
