"""kernelforge: feature-directed synthesis of compiler benchmark kernels."""

__version__ = "0.1.0"
