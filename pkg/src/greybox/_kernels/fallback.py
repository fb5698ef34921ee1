"""Pure-NumPy fallback for the compiled stepping kernel."""

import numpy as np


def affine_recursion(a, w, x0):
    """Run x[k+1] = a @ x[k] + w[k] and return the stacked iterates.

    Same contract as the compiled version; one matvec per step.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    nsteps, n = w.shape
    if a.shape != (n, n) or x0.shape != (n,):
        raise ValueError("affine_recursion: inconsistent shapes")
    out = np.empty((nsteps + 1, n))
    out[0] = x0
    x = x0
    for k in range(nsteps):
        x = a @ x + w[k]
        out[k + 1] = x
    return out
