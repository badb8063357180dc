"""Chart evaluators for graph surfaces.

A chart is a map g : B_r subset R^m -> R^n with derivatives available up to
order 4.  Derivative tensors are returned in full symmetric form with shape
``x.shape[:-1] + (n,) + (m,)*order`` so callers can contract without special
cases.  All evaluators accept batched inputs of shape (..., m).
"""

from itertools import product

import numpy as np
import sympy as sp

from .errors import DomainError
from .polytools import mi_falling, mi_power, multiindices, tensor_index_to_mi

MAX_DERIV_ORDER = 4


class Chart:
    """Base chart interface: value and derivative tensors up to order 4."""

    m = None
    n = None

    def value(self, x):
        raise NotImplementedError

    def derivative(self, x, order):
        """Full derivative tensor of the given order (1 <= order <= 4)."""
        raise NotImplementedError

    def _check(self, order):
        if not 1 <= order <= MAX_DERIV_ORDER:
            raise DomainError(f"derivative order {order} unsupported (1..{MAX_DERIV_ORDER})")


def _fill_symmetric(x_shape, n, m, order, entry_fn):
    """Build a symmetric tensor by filling every index tuple from entry_fn(beta)."""
    out = np.zeros(x_shape + (n,) + (m,) * order)
    cache = {}
    for idx in product(range(m), repeat=order):
        beta = tensor_index_to_mi(idx, m)
        if beta not in cache:
            cache[beta] = entry_fn(beta)
        out[(...,) + (slice(None),) + idx] = cache[beta]
    return out


class PolynomialChart(Chart):
    """Polynomial chart given by {multi-index: coefficient vector} with exact derivatives."""

    def __init__(self, m, n, coeffs):
        self.m = int(m)
        self.n = int(n)
        clean = {}
        for beta, c in coeffs.items():
            beta = tuple(int(b) for b in beta)
            if len(beta) != self.m:
                raise DomainError("coefficient multi-index length mismatch")
            c = np.atleast_1d(np.asarray(c, dtype=float))
            if c.shape != (self.n,):
                raise DomainError("coefficient vector shape mismatch")
            if np.any(c != 0.0) or not clean:
                clean[beta] = c
        self.coeffs = dict(sorted(clean.items(), key=lambda kv: (sum(kv[0]), kv[0])))
        self.degree = max((sum(b) for b in self.coeffs), default=0)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.n,))
        for beta, c in self.coeffs.items():
            out += mi_power(x, beta)[..., None] * c
        return out

    def derivative(self, x, order):
        self._check(order)
        x = np.asarray(x, dtype=float)

        def entry(gamma):
            acc = np.zeros(x.shape[:-1] + (self.n,))
            for beta, c in self.coeffs.items():
                fall = mi_falling(beta, gamma)
                if fall:
                    shifted = tuple(b - g for b, g in zip(beta, gamma))
                    acc += fall * mi_power(x, shifted)[..., None] * c
            return acc

        return _fill_symmetric(x.shape[:-1], self.n, self.m, order, entry)


class SymbolicChart(Chart):
    """Chart from sympy expressions; derivatives lambdified once at construction."""

    def __init__(self, m, n, exprs, symbols, domain_guard=None):
        self.m = int(m)
        self.n = int(n)
        exprs = list(exprs)
        if len(exprs) != self.n or len(symbols) != self.m:
            raise DomainError("expression/symbol count mismatch")
        self.exprs = exprs
        self.symbols = list(symbols)
        self.domain_guard = domain_guard
        self._fns = {}
        mis = multiindices(self.m, MAX_DERIV_ORDER)
        for beta in mis:
            row = []
            for e in exprs:
                d = e
                for i, b in enumerate(beta):
                    if b:
                        d = sp.diff(d, self.symbols[i], b)
                row.append(sp.lambdify(self.symbols, d, modules="numpy"))
            self._fns[beta] = row

    def _eval_mi(self, x, beta):
        args = [x[..., i] for i in range(self.m)]
        cols = []
        for fn in self._fns[beta]:
            v = fn(*args)
            cols.append(np.broadcast_to(np.asarray(v, dtype=float), x.shape[:-1]))
        return np.stack(cols, axis=-1)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.domain_guard is not None and not self.domain_guard(x):
            raise DomainError("chart evaluated outside its domain")
        return self._eval_mi(x, tuple([0] * self.m))

    def derivative(self, x, order):
        self._check(order)
        x = np.asarray(x, dtype=float)
        return _fill_symmetric(
            x.shape[:-1], self.n, self.m, order, lambda beta: self._eval_mi(x, beta)
        )


class ScaledChart(Chart):
    """Homothety of a chart: g_lam(u) = lam * g(u / lam)."""

    def __init__(self, base, lam):
        self.base = base
        self.lam = float(lam)
        self.m = base.m
        self.n = base.n

    def value(self, x):
        return self.lam * self.base.value(np.asarray(x, dtype=float) / self.lam)

    def derivative(self, x, order):
        self._check(order)
        return self.lam ** (1 - order) * self.base.derivative(
            np.asarray(x, dtype=float) / self.lam, order
        )


class OffsetChart(Chart):
    """Base-point shift of a chart: g'(u) = g(u + u0) - y0."""

    def __init__(self, base, u0, y0=None):
        self.base = base
        self.m = base.m
        self.n = base.n
        self.u0 = np.asarray(u0, dtype=float).reshape(self.m)
        self.y0 = (
            np.zeros(self.n) if y0 is None else np.asarray(y0, dtype=float).reshape(self.n)
        )

    def value(self, x):
        return self.base.value(np.asarray(x, dtype=float) + self.u0) - self.y0

    def derivative(self, x, order):
        self._check(order)
        return self.base.derivative(np.asarray(x, dtype=float) + self.u0, order)


def fit_polynomial_chart(points_u, values_y, m, n, degree):
    """Least-squares polynomial chart through sampled (u, y) pairs.

    Returns (chart, max_abs_residual).  The fit is the workhorse for turning a
    solved graph-over-surface back into a plain chart over the base plane.
    """
    points_u = np.asarray(points_u, dtype=float).reshape(-1, m)
    values_y = np.asarray(values_y, dtype=float).reshape(-1, n)
    mis = multiindices(m, degree)
    A = np.stack([mi_power(points_u, beta) for beta in mis], axis=1)
    sol, *_ = np.linalg.lstsq(A, values_y, rcond=None)
    resid = A @ sol - values_y
    chart = PolynomialChart(m, n, {beta: sol[i] for i, beta in enumerate(mis)})
    return chart, float(np.max(np.abs(resid))) if resid.size else 0.0
