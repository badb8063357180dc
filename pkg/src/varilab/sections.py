"""Tensor grids over chart balls, normal sections, and cached surface geometry.

Fields live on a uniform tensor grid in chart coordinates.  A SectionSpace
precomputes frames, metric data, second fundamental form, and frame-field
derivatives once per (surface, grid) pair; NormalSection values are ambient
chart-frame vectors stored nodewise and kept exactly normal.
"""

import numpy as np

from .errors import DomainError
from .surfaces import GraphSurface

_FD_STEP = 1e-5


class TensorGrid:
    """Uniform tensor grid on the box [-radius, radius]^m."""

    def __init__(self, m, radius, n_axis):
        if n_axis < 8:
            raise DomainError("grid too coarse: need at least 8 nodes per axis")
        self.m = int(m)
        self.radius = float(radius)
        self.n_axis = int(n_axis)
        self.h = 2.0 * self.radius / (self.n_axis - 1)
        self.axis = np.linspace(-self.radius, self.radius, self.n_axis)
        self.shape = (self.n_axis,) * self.m
        mesh = np.meshgrid(*([self.axis] * self.m), indexing="ij")
        self.nodes = np.stack(mesh, axis=-1)  # shape + (m,)
        self.n_nodes = self.nodes[..., 0].size

    def flat_nodes(self):
        return self.nodes.reshape(-1, self.m)

    def interior_mask(self, margin=1):
        mask = np.ones(self.shape, dtype=bool)
        for ax in range(self.m):
            sl = [slice(None)] * self.m
            for edge in range(margin):
                sl[ax] = edge
                mask[tuple(sl)] = False
                sl[ax] = self.n_axis - 1 - edge
                mask[tuple(sl)] = False
        return mask

    def boundary_mask(self, margin=1):
        return ~self.interior_mask(margin)

    def quad_weights(self):
        """Trapezoidal product weights, shape = grid shape."""
        w1 = np.full(self.n_axis, self.h)
        w1[0] = w1[-1] = self.h / 2.0
        w = w1
        for _ in range(self.m - 1):
            w = np.multiply.outer(w, w1)
        return w


# -- finite differences on grid arrays (shape + trailing dims) ---------------


def d1(grid: TensorGrid, V, axis):
    """Central first difference along a grid axis; one-sided at the edges."""
    V = np.asarray(V, dtype=float)
    out = np.zeros_like(V)
    h = grid.h

    def sl(i):
        s = [slice(None)] * V.ndim
        s[axis] = i
        return tuple(s)

    out[sl(slice(1, -1))] = (V[sl(slice(2, None))] - V[sl(slice(None, -2))]) / (2 * h)
    out[sl(0)] = (-3 * V[sl(0)] + 4 * V[sl(1)] - V[sl(2)]) / (2 * h)
    out[sl(-1)] = (3 * V[sl(-1)] - 4 * V[sl(-2)] + V[sl(-3)]) / (2 * h)
    return out


def d2(grid: TensorGrid, V, axis):
    """Compact second difference along an axis; copies nearest interior value at edges."""
    V = np.asarray(V, dtype=float)
    out = np.zeros_like(V)
    h2 = grid.h**2

    def sl(i):
        s = [slice(None)] * V.ndim
        s[axis] = i
        return tuple(s)

    out[sl(slice(1, -1))] = (
        V[sl(slice(2, None))] - 2 * V[sl(slice(1, -1))] + V[sl(slice(None, -2))]
    ) / h2
    out[sl(0)] = out[sl(1)]
    out[sl(-1)] = out[sl(-2)]
    return out


def d_mixed(grid: TensorGrid, V, ax1, ax2):
    """Cross second difference via composed central first differences."""
    return d1(grid, d1(grid, V, ax1), ax2)


class SectionSpace:
    """Grid plus cached pointwise geometry of the carrying surface."""

    def __init__(self, surface: GraphSurface, grid: TensorGrid):
        if grid.radius > surface.chart_radius + 1e-12:
            # tensor box corners may leave the chart ball; callers choose radii
            # so that sqrt(m) * grid.radius stays within the chart domain
            raise DomainError("grid box exceeds chart radius")
        self.surface = surface
        self.grid = grid
        m, n = surface.dim_m, surface.codim_n
        d = m + n
        us = grid.flat_nodes()
        N = len(us)

        tangent, normal, avel = surface.frames_chart(us)
        self.tangent = tangent.reshape(grid.shape + (d, m))
        self.normal = normal.reshape(grid.shape + (d, n))
        self.avel = avel.reshape(grid.shape + (m, m))

        Dg = surface.chart.derivative(us, 1)
        D2g = surface.chart.derivative(us, 2)
        G = np.eye(m) + np.einsum("pai,paj->pij", Dg, Dg)
        Ginv = np.linalg.inv(G)
        sqrtG = np.sqrt(np.linalg.det(G))
        # dG[p, k, i, j] = d_k G_ij, exact from the chart derivatives
        dG = np.einsum("paki,paj->pkij", D2g, Dg) + np.einsum("pakj,pai->pkij", D2g, Dg)
        # b^j = (1/sqrtG) d_i (sqrtG G^{ij}) = sum_i [tr(Ginv dG_i)/2 * G^{ij} + d_i G^{ij}]
        trterm = 0.5 * np.einsum("pij,pkij->pk", Ginv, dG)
        dGinv = -np.einsum("pia,pkab,pbj->pkij", Ginv, dG, Ginv)
        b = np.einsum("pi,pij->pj", trterm, Ginv) + np.einsum("piij->pj", dGinv)
        self.metric = G.reshape(grid.shape + (m, m))
        self.metric_inv = Ginv.reshape(grid.shape + (m, m))
        self.sqrt_metric = sqrtG.reshape(grid.shape)
        self.b_coeff = b.reshape(grid.shape + (m,))

        nu_tail = normal[..., m:, :]
        self.II = np.einsum("pka,plb,pgkl,pgc->pabc", avel, avel, D2g, nu_tail).reshape(
            grid.shape + (m, m, n)
        )
        self.ii_gram = np.einsum("...abc,...abd->...cd", self.II, self.II)

        # frame-field derivatives by small-step differencing of the smooth field
        h = _FD_STEP * (1.0 + np.linalg.norm(us, axis=1, keepdims=True))
        dnu = np.zeros((N, m, d, n))
        dtan = np.zeros((N, m, d, m))
        lap_nu = np.zeros((N, d, n))
        for k in range(m):
            e = np.zeros(m)
            e[k] = 1.0
            tan_p, nu_p, _ = surface.frames_chart(us + h * e)
            tan_m, nu_m, _ = surface.frames_chart(us - h * e)
            dnu[:, k] = (nu_p - nu_m) / (2 * h[..., None])
            dtan[:, k] = (tan_p - tan_m) / (2 * h[..., None])
            lap_nu += Ginv[:, k, k, None, None] * (nu_p - 2 * normal + nu_m) / (
                h[..., None] ** 2
            )
            lap_nu += b[:, k, None, None] * dnu[:, k]
        for k in range(m):
            for l in range(k + 1, m):
                ek = np.zeros(m)
                ek[k] = 1.0
                el = np.zeros(m)
                el[l] = 1.0
                _, nu_pp, _ = surface.frames_chart(us + h * (ek + el))
                _, nu_mm, _ = surface.frames_chart(us - h * (ek + el))
                _, nu_pm, _ = surface.frames_chart(us + h * (ek - el))
                _, nu_mp, _ = surface.frames_chart(us - h * (ek - el))
                mixed = (nu_pp + nu_mm - nu_pm - nu_mp) / (4 * h[..., None] ** 2)
                lap_nu += 2.0 * Ginv[:, k, l, None, None] * mixed
        self.dnu = dnu.reshape(grid.shape + (m, d, n))
        self.dtan = dtan.reshape(grid.shape + (m, d, m))
        self.lap_nu = lap_nu.reshape(grid.shape + (d, n))

    @property
    def m(self):
        return self.surface.dim_m

    @property
    def n(self):
        return self.surface.codim_n

    def integrate(self, field):
        """Surface integral of a nodewise scalar field (trapezoid x sqrt det G)."""
        return float(np.sum(np.asarray(field) * self.grid.quad_weights() * self.sqrt_metric))


class NormalSection:
    """Nodewise normal vector field on a SectionSpace, stored in ambient chart frame."""

    def __init__(self, space: SectionSpace, values=None, coeffs=None, fn=None):
        self.space = space
        self.fn = fn
        grid = space.grid
        d = space.m + space.n
        if coeffs is not None:
            coeffs = np.asarray(coeffs, dtype=float).reshape(grid.shape + (space.n,))
        else:
            if values is None:
                if fn is None:
                    raise DomainError("need values, coeffs, or a callable")
                values = fn(grid.flat_nodes()).reshape(grid.shape + (d,))
            values = np.asarray(values, dtype=float).reshape(grid.shape + (d,))
            coeffs = np.einsum("...d,...dc->...c", values, space.normal)
        self.coeffs = coeffs
        self.values = np.einsum("...dc,...c->...d", space.normal, coeffs)
        self.info = {}

    def copy_with(self, coeffs):
        return NormalSection(self.space, coeffs=coeffs)

    def sup(self, mask=None):
        mag = np.linalg.norm(self.values, axis=-1)
        if mask is not None:
            mag = mag[mask]
        return float(np.max(mag)) if mag.size else 0.0

    def gradient(self):
        """Nodewise chart-coordinate derivatives of the ambient values, shape + (m, d)."""
        g = self.space.grid
        return np.stack([d1(g, self.values, ax) for ax in range(g.m)], axis=-2)

    def scaled(self, t):
        return NormalSection(self.space, coeffs=t * self.coeffs)

    def __add__(self, other):
        return NormalSection(self.space, coeffs=self.coeffs + other.coeffs)

    def __sub__(self, other):
        return NormalSection(self.space, coeffs=self.coeffs - other.coeffs)


def section_from_callable(space: SectionSpace, fn):
    """Sample an ambient-valued callable into a NormalSection, keeping the callable."""
    return NormalSection(space, values=fn(space.grid.flat_nodes()), fn=fn)


def section_dirderiv(space: SectionSpace, section: NormalSection, order=1):
    """Chart-coordinate derivatives of the section's ambient values.

    Uses small-step differencing of the callable when one is attached (near
    machine accuracy), otherwise grid stencils.  Returns, for order 1, an
    array shape + (m, d); for order 2, shape + (m, m, d).
    """
    grid = space.grid
    m = space.m
    if section.fn is None:
        if order == 1:
            return section.gradient()
        out = np.zeros(grid.shape + (m, m) + (space.m + space.n,))
        for i in range(m):
            for j in range(m):
                if i == j:
                    out[..., i, i, :] = d2(grid, section.values, i)
                else:
                    out[..., i, j, :] = d_mixed(grid, section.values, i, j)
        return out
    us = grid.flat_nodes()
    d = space.m + space.n
    if order == 1:
        h = _FD_STEP * (1.0 + np.linalg.norm(us, axis=1, keepdims=True))
        out = np.zeros((len(us), m, d))
        for k in range(m):
            e = np.zeros(m)
            e[k] = 1.0
            out[:, k] = (section.fn(us + h * e) - section.fn(us - h * e)) / (2 * h)
        return out.reshape(grid.shape + (m, d))
    # second differences balance truncation against rounding at a larger step
    h = 3e-4 * (1.0 + np.linalg.norm(us, axis=1, keepdims=True))
    out = np.zeros((len(us), m, m, d))
    f0 = section.fn(us)
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        out[:, k, k] = (section.fn(us + h * e) - 2 * f0 + section.fn(us - h * e)) / h**2
    for k in range(m):
        for l in range(k + 1, m):
            ek = np.zeros(m)
            ek[k] = 1.0
            el = np.zeros(m)
            el[l] = 1.0
            mixed = (
                section.fn(us + h * (ek + el))
                + section.fn(us - h * (ek + el))
                - section.fn(us + h * (ek - el))
                - section.fn(us - h * (ek - el))
            ) / (4 * h**2)
            out[:, k, l] = mixed
            out[:, l, k] = mixed
    return out.reshape(grid.shape + (m, m, d))
