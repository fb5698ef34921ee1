"""Stepping-kernel backend selection.

Prefers the compiled Cython extension; falls back to the NumPy loop when
the extension was not built. ``KERNEL_BACKEND`` records which one is
active so benchmarks and bug reports can name it.
"""

try:
    from ._recursion import affine_recursion

    KERNEL_BACKEND = "cython"
except ImportError:  # extension not compiled
    from .fallback import affine_recursion

    KERNEL_BACKEND = "numpy"

__all__ = ["affine_recursion", "KERNEL_BACKEND"]
