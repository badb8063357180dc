"""Multi-index bookkeeping for polynomials and Taylor data.

Multi-indices are tuples of non-negative integers of length ``m``, ordered
graded-lexicographically (by total degree, then lexicographic).
"""

import math
from itertools import product

import numpy as np


def multiindices(m, degree):
    """All multi-indices in ``m`` variables with |beta| <= degree, graded-lex."""
    out = []
    for total in range(degree + 1):
        level = [b for b in product(range(total + 1), repeat=m) if sum(b) == total]
        level.sort()
        out.extend(level)
    return [tuple(b) for b in out]


def mi_count(m, degree):
    """Number of multi-indices with |beta| <= degree, i.e. C(m+degree, degree)."""
    return math.comb(m + degree, degree)


def mi_factorial(beta):
    out = 1
    for b in beta:
        out *= math.factorial(b)
    return out


def mi_falling(beta, alpha):
    """Product of falling factorials beta_i! / (beta_i - alpha_i)!; 0 if alpha > beta."""
    out = 1
    for b, a in zip(beta, alpha):
        if a > b:
            return 0
        out *= math.perm(b, a)
    return out


def mi_power(x, beta):
    """x**beta for batched x of shape (..., m)."""
    x = np.asarray(x, dtype=float)
    out = np.ones(x.shape[:-1])
    for i, b in enumerate(beta):
        if b:
            out = out * x[..., i] ** b
    return out


def tensor_index_to_mi(idx, m):
    """Multi-index of a symmetric-tensor entry given its index tuple."""
    beta = [0] * m
    for i in idx:
        beta[i] += 1
    return tuple(beta)


def mi_to_sorted_tensor_index(beta):
    """A representative tensor index tuple (sorted) for a multi-index."""
    idx = []
    for i, b in enumerate(beta):
        idx.extend([i] * b)
    return tuple(idx)
