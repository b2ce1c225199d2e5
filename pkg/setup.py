"""Build script: compiles the optional native core.

The extension is a performance feature, not a requirement — any build failure
(no compiler, no Cython) degrades to the pure-Python engine, which is selected
automatically at import. Set PAREXEC_PURE=1 to skip the extension entirely.
"""
import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Never fail the install over the native core; warn and fall back."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print("warning: skipping native core (%s); using pure-Python engine" % exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print("warning: failed to build %s (%s); using pure-Python engine"
                  % (ext.name, exc))


def native_extensions():
    if os.environ.get("PAREXEC_PURE") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython unavailable; building without the native core")
        return []
    return cythonize(
        [Extension(
            "parexec._native",
            ["src/parexec/_native.pyx"],
            language="c++",
            include_dirs=["src/parexec"],
            extra_compile_args=["-O3", "-std=c++17"],
            extra_link_args=["-pthread"],
        )],
        compiler_directives={"language_level": "3"},
    )


setup(ext_modules=native_extensions(), cmdclass={"build_ext": optional_build_ext})
