"""Build script for the optional compiled LM-OTS kernels.

If Cython, a C compiler or the OpenSSL headers are missing the package is
installed without the extension and falls back to pure Python.
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            self.warn(f"skipping compiled kernels: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self.warn(f"skipping {ext.name}: {exc}")


def ext_modules():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    return cythonize(
        [
            Extension(
                "pqtc.lms._ckernels",
                ["src/pqtc/lms/_ckernels.pyx"],
                libraries=["crypto"],
                extra_compile_args=["-O3", "-Wno-deprecated-declarations"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )


setup(ext_modules=ext_modules(), cmdclass={"build_ext": OptionalBuildExt})
