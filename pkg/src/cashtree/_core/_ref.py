"""NumPy reference implementation of the hot kernels.

Mirrors the compiled extension exactly (per-dimension difference
accumulation, no inner-product shortcut, so both backends agree to machine
precision); used as the import-time fallback and as ground truth in the
backend-equivalence tests.
"""

import numpy as np

SQRT5 = np.sqrt(5.0)


def kernel_cross(xc1, xcat1, xc2, xcat2, lengthscales, cat_lengthscale, signal_variance):
    """Matern-5/2 (per-dimension lengthscales) times a Hamming kernel.

    xc*: (n, d_cont) float arrays, xcat*: (n, d_cat) integer arrays.
    Returns the (n1, n2) covariance matrix.
    """
    xc1 = np.asarray(xc1, dtype=np.float64)
    xc2 = np.asarray(xc2, dtype=np.float64)
    n1, n2 = xc1.shape[0], xc2.shape[0]
    r2 = np.zeros((n1, n2))
    for d in range(xc1.shape[1]):
        diff = (xc1[:, d, None] - xc2[None, :, d]) / lengthscales[d]
        r2 += diff * diff
    r = np.sqrt(r2)
    k = (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * np.exp(-SQRT5 * r)
    xcat1 = np.asarray(xcat1)
    xcat2 = np.asarray(xcat2)
    if xcat1.shape[1]:
        h = np.mean(xcat1[:, None, :] != xcat2[None, :, :], axis=2)
        k = k * np.exp(-cat_lengthscale * h)
    return signal_variance * k


def kernel_gram(xc, xcat, lengthscales, cat_lengthscale, signal_variance):
    """Symmetric covariance matrix of one set of encoded configurations."""
    return kernel_cross(xc, xcat, xc, xcat, lengthscales, cat_lengthscale, signal_variance)


def kendall_counts(a, b):
    """Concordant/discordant pair counts; ties in either list count as neither."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    sa = np.sign(a[:, None] - a[None, :])
    sb = np.sign(b[:, None] - b[None, :])
    prod = np.triu(sa * sb, k=1)
    return int(np.sum(prod > 0)), int(np.sum(prod < 0))
