"""Pure numpy implementations of the hot kernels.

Same signatures as the compiled module; selected automatically when the
extension is unavailable (or CONESQ_BACKEND=numpy). Sample batches are
chunked so the (samples x atoms) broadcast never allocates more than a few
MB at once.
"""

import numpy as np

_CHUNK = 8192


def min_dist(pts, cloud):
    """Min Euclidean distance from each row of pts (S,n) to the cloud (N,n)."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    cloud = np.ascontiguousarray(cloud, dtype=np.float64)
    S = pts.shape[0]
    out = np.empty(S, dtype=np.float64)
    step = max(1, _CHUNK // max(1, cloud.shape[0] // 64 + 1))
    for lo in range(0, S, step):
        hi = min(lo + step, S)
        d2 = ((pts[lo:hi, None, :] - cloud[None, :, :]) ** 2).sum(-1)
        out[lo:hi] = np.sqrt(d2.min(axis=1))
    return out


def pow_kernel_sum(pts, atoms, w, p):
    """sum_i w_i |x - z_i|^(-p) for each x in pts; w complex."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    atoms = np.ascontiguousarray(atoms, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.complex128)
    S = pts.shape[0]
    out = np.empty(S, dtype=np.complex128)
    step = max(1, _CHUNK // max(1, atoms.shape[0] // 64 + 1))
    for lo in range(0, S, step):
        hi = min(lo + step, S)
        r = np.sqrt(((pts[lo:hi, None, :] - atoms[None, :, :]) ** 2).sum(-1))
        out[lo:hi] = (r ** (-p)) @ w
    return out


def signed_kernel_sum(pts, atoms, w, p):
    """sum_i w_i (x_1 - z_i1) |x - z_i|^(-(p+1)) for each x in pts."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    atoms = np.ascontiguousarray(atoms, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.complex128)
    S = pts.shape[0]
    out = np.empty(S, dtype=np.complex128)
    step = max(1, _CHUNK // max(1, atoms.shape[0] // 64 + 1))
    for lo in range(0, S, step):
        hi = min(lo + step, S)
        diff = pts[lo:hi, None, :] - atoms[None, :, :]
        r = np.sqrt((diff ** 2).sum(-1))
        out[lo:hi] = (diff[:, :, 0] * r ** (-(p + 1.0))) @ w
    return out
