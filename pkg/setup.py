import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("INCREPAIR_NO_EXT", "") in ("", "0"):
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("increpair._speedups", ["src/increpair/_speedups.pyx"],
                       include_dirs=[numpy.get_include()], language="c++",
                       extra_compile_args=["-O3"],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
