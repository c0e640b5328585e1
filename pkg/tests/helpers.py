"""Shared builders for the test suite."""

import numpy as np

from gapbench.relu import Network


def random_network(rng, d_in, depth, width=None, d_out=1, scale=1.0):
    """Dense network with Gaussian weights; hidden widths drawn in [1, width]."""
    width = width or 6
    dims = [d_in] + [int(rng.integers(1, width + 1)) for _ in range(depth - 1)] + [d_out]
    layers = [(scale * rng.normal(size=(dims[j + 1], dims[j])), scale * rng.normal(size=dims[j + 1]))
              for j in range(depth)]
    return Network(layers)


def relerr(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / (1.0 + np.abs(b))))
