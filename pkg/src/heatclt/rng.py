"""Counter-based random streams.

Every Gaussian draw is addressed by ``(seed, replica, step, tag)``. The
Philox key holds ``(seed, replica)`` and the high counter words hold
``(step, tag)``, so a draw never depends on which worker produced it or on
the order in which replicas were scheduled.
"""

import numpy as np

_MASK = (1 << 64) - 1


def stream(seed, replica, step=0, tag=0):
    """Return a Generator for one ``(seed, replica, step, tag)`` address."""
    if min(seed, replica, step, tag) < 0:
        raise ValueError("stream coordinates must be nonnegative")
    key = np.array([seed & _MASK, replica & _MASK], dtype=np.uint64)
    counter = np.array([0, 0, step & _MASK, tag & _MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normals(seed, replica, step, size, tag=0):
    """Standard normal draws for one address."""
    return stream(seed, replica, step, tag).standard_normal(size)


def fill_normals(out, seed, replicas, step, tag=0):
    """Fill row ``i`` of ``out`` with the draws for ``replicas[i]``.

    ``out`` has shape ``(len(replicas), *cell_shape)``.
    """
    for row, rep in zip(out, replicas):
        stream(seed, int(rep), step, tag).standard_normal(out=row)
    return out
