import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

sources = sorted(glob.glob("src/*.cpp"))

ext = Pybind11Extension(
    "umfa._umfa",
    sources,
    include_dirs=["include", "vendor"],
    libraries=["png"],
    cxx_std=20,
    # fp-contract off keeps convolution results independent of FMA,
    # matching the reference oracles used by the tests.
    extra_compile_args=["-O3", "-ffp-contract=off"],
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
