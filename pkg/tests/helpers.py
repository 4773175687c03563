import numpy as np


def disks(h, w, circles, fg=200, bg=40, ss=4):
    """Anti-aliased filled disks ``(cx, cy, r)`` by ``ss``-times supersampling."""
    ys, xs = (np.mgrid[0:h * ss, 0:w * ss] + 0.5) / ss - 0.5
    m = np.zeros((h * ss, w * ss))
    for cx, cy, r in circles:
        m = np.maximum(m, np.hypot(xs - cx, ys - cy) <= r)
    cov = m.reshape(h, ss, w, ss).mean(axis=(1, 3))
    return (bg + (fg - bg) * cov).astype(np.uint8)
