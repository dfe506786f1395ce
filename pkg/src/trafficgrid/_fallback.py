"""Pure numpy descriptor kernels, used when the compiled extension is absent.

Both backends share one signature: they take a C-contiguous float64 stack of
grayscale cells shaped (n, h, w) and return one descriptor row per cell.
"""
import numpy as np


def gradients(img):
    """Central differences inside, one-sided at the borders. img is (..., h, w)."""
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    w = img.shape[-1]
    h = img.shape[-2]
    if w > 1:
        gx[..., :, 1:-1] = img[..., :, 2:] - img[..., :, :-2]
        gx[..., :, 0] = img[..., :, 1] - img[..., :, 0]
        gx[..., :, -1] = img[..., :, -1] - img[..., :, -2]
    if h > 1:
        gy[..., 1:-1, :] = img[..., 2:, :] - img[..., :-2, :]
        gy[..., 0, :] = img[..., 1, :] - img[..., 0, :]
        gy[..., -1, :] = img[..., -1, :] - img[..., -2, :]
    mag = np.sqrt(gx * gx + gy * gy)
    ori = np.mod(np.arctan2(gy, gx) * (180.0 / np.pi), 180.0)
    return mag, ori


def hog_batch(cells, sub, orientations):
    n, h, w = cells.shape
    ny, nx = h // sub, w // sub
    mag, ori = gradients(cells)
    mag = mag[:, :ny * sub, :nx * sub]
    ori = ori[:, :ny * sub, :nx * sub]
    b = np.floor(ori / (180.0 / orientations)).astype(np.int64)
    np.clip(b, 0, orientations - 1, out=b)
    k = np.arange(n)[:, None, None]
    r = np.arange(ny * sub)[None, :, None] // sub
    c = np.arange(nx * sub)[None, None, :] // sub
    idx = ((k * ny + r) * nx + c) * orientations + b
    hist = np.bincount(idx.ravel(), weights=mag.ravel(), minlength=n * ny * nx * orientations)
    hist = hist.reshape(n, ny * nx, orientations)
    norm = np.sqrt(np.einsum("ijk,ijk->ij", hist, hist) + 1e-20)
    return (hist / norm[..., None]).reshape(n, ny * nx * orientations)


def lbp_batch(cells, radius, points, dx, dy):
    n, h, w = cells.shape
    R = radius
    vh, vw = h - 2 * R, w - 2 * R
    center = cells[:, R:h - R, R:w - R]
    bits = np.empty((points, n, vh, vw), dtype=np.bool_)

    def view(oy, ox):
        return cells[:, R + oy:R + oy + vh, R + ox:R + ox + vw]

    for k in range(points):
        x0 = int(np.floor(dx[k]))
        y0 = int(np.floor(dy[k]))
        tx = dx[k] - x0
        ty = dy[k] - y0
        x1 = x0 + 1 if tx > 0.0 else x0
        y1 = y0 + 1 if ty > 0.0 else y0
        i00 = view(y0, x0)
        i01 = view(y0, x1)
        i10 = view(y1, x0)
        i11 = view(y1, x1)
        val = i00 + tx * (i01 - i00) + ty * (i10 - i00) + (tx * ty) * (i00 - i01 - i10 + i11)
        bits[k] = val >= center

    ones = bits.sum(axis=0, dtype=np.int64)
    trans = (bits != np.roll(bits, -1, axis=0)).sum(axis=0, dtype=np.int64)
    code = np.where(trans <= 2, ones, points + 1)
    idx = code + (points + 2) * np.arange(n)[:, None, None]
    hist = np.bincount(idx.ravel(), minlength=n * (points + 2)).reshape(n, points + 2)
    return hist / float(vh * vw)
