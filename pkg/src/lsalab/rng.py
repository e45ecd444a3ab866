"""Counter-based splittable random streams.

Every Monte Carlo consumer in the package owns a *stream*: an independent,
reproducible random sequence identified by ``(seed, stream_id)``.  Streams are
built on numpy's Philox bit generator, which is counter-based: the key is the
64-bit pair ``(seed, stream_id)``, so any stream can be reconstructed from its
identifier alone, with no generator-to-generator state hand-off.  Two
consequences the rest of the package relies on:

* the draws of stream k never depend on how many other streams exist, which
  worker executed them, or in which order streams were consumed;
* re-running with the same seed reproduces every stream bit-for-bit.

Uniform variates are produced directly from the raw 64-bit counters as
``((word >> 11) + 0.5) * 2^-53``, which lies strictly inside (0, 1).  Gaussian
variates apply the inverse normal CDF (``scipy.special.ndtri``, the Cephes
rational minimax approximation of the probit function, accurate to ~1e-16
relative) to those uniforms.  This avoids rejection-based samplers whose
consumption pattern can change between library versions, so the mapping from
counters to variates is a fixed pure function.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

_U64 = np.uint64
_TWO53_INV = 2.0**-53


def stream(seed: int, stream_id: int) -> Generator:
    """Independent generator for the (seed, stream_id) counter stream."""
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if not 0 <= stream_id < 2**64:
        raise ValueError(f"stream_id must be a 64-bit unsigned integer, got {stream_id}")
    key = np.array([seed, stream_id], dtype=_U64)
    return Generator(Philox(key=key))


def uniform_open01(gen: Generator, size: int | tuple[int, ...]) -> np.ndarray:
    """Uniform draws strictly inside (0, 1), one 64-bit counter word each."""
    raw = gen.integers(0, 2**64, size=size, dtype=_U64)
    return ((raw >> _U64(11)).astype(np.float64) + 0.5) * _TWO53_INV


def normal_inverse_cdf(gen: Generator, size: int | tuple[int, ...]) -> np.ndarray:
    """Standard normal draws via the inverse CDF applied to open uniforms."""
    return ndtri(uniform_open01(gen, size))


def rademacher(gen: Generator, size: int | tuple[int, ...], p_plus: float = 0.5) -> np.ndarray:
    """Signs in {+1, -1} with P(+1) = p_plus, from one uniform each."""
    if not 0.0 <= p_plus <= 1.0:
        raise ValueError(f"p_plus must be in [0, 1], got {p_plus}")
    return np.where(uniform_open01(gen, size) < p_plus, 1.0, -1.0)


def categorical(gen: Generator, cdf: np.ndarray, size: int | tuple[int, ...]) -> np.ndarray:
    """Indices sampled from the distribution with cumulative weights ``cdf``.

    ``cdf`` is the inclusive cumulative sum of the probability vector; the
    last entry must be 1 up to rounding.  One uniform is consumed per draw.
    """
    cdf = np.asarray(cdf, dtype=float)
    u = uniform_open01(gen, size)
    idx = np.searchsorted(cdf, u, side="left")
    return np.minimum(idx, cdf.size - 1)
