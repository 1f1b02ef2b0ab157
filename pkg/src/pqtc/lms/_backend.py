"""Import-time selection between the compiled and pure-Python kernels."""

try:
    from . import _ckernels as kernels

    BACKEND = "c"
except ImportError:  # extension not built
    from . import _pykernels as kernels

    BACKEND = "python"
