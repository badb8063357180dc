"""Graph surfaces in R^(m+n), their frames, curvature tensors, and plane algebra.

A surface is the image of u |-> pose_rot @ (u, g(u)) + pose_t over a chart
ball; all differential geometry is computed in the chart frame and rotated
out at the API boundary.
"""

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .charts import (
    Chart,
    OffsetChart,
    PolynomialChart,
    ScaledChart,
    SymbolicChart,
)
from .errors import DomainError
from .polytools import multiindices

_FRAME_FD_STEP = 1e-5  # relative step for frame-field differentiation


# ---------------------------------------------------------------------------
# planes and frames


@dataclass
class Plane:
    """An m-plane through ``base`` given by its orthogonal projector."""

    base: np.ndarray
    projector: np.ndarray

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        P = np.asarray(self.projector, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DomainError("projector must be square")
        if np.max(np.abs(P - P.T)) > 1e-12:
            raise DomainError("projector not symmetric")
        if np.max(np.abs(P @ P - P)) > 1e-12:
            raise DomainError("projector not idempotent")
        tr = float(np.trace(P))
        if abs(tr - round(tr)) > 1e-12:
            raise DomainError("projector trace not an integer")
        self.projector = P
        self.dim = int(round(tr))

    @property
    def ambient_dim(self):
        return self.projector.shape[0]

    @classmethod
    def from_span(cls, base, vectors):
        V = np.asarray(vectors, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        Q = gram_schmidt(V)
        return cls(np.asarray(base, dtype=float), Q @ Q.T)

    @classmethod
    def coordinate(cls, m, n, base=None):
        """The plane R^m x {0} in R^(m+n)."""
        d = m + n
        P = np.zeros((d, d))
        P[:m, :m] = np.eye(m)
        return cls(np.zeros(d) if base is None else base, P)


@dataclass
class Frame:
    """Orthonormal adapted frame at a surface point: tangent then normal columns."""

    base: np.ndarray
    tangent: np.ndarray  # (m+n, m)
    normal: np.ndarray  # (m+n, n)

    def full(self):
        return np.concatenate([self.tangent, self.normal], axis=1)


def gram_schmidt(cols):
    """Orthonormalize columns in order; supports batched input (..., d, k)."""
    cols = np.asarray(cols, dtype=float)
    out = np.zeros_like(cols)
    k = cols.shape[-1]
    for j in range(k):
        v = cols[..., j].copy()
        for i in range(j):
            v -= np.sum(out[..., i] * v, axis=-1, keepdims=True) * out[..., i]
        nrm = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(nrm < 1e-14):
            raise DomainError("degenerate column set in Gram-Schmidt")
        out[..., j] = v / nrm
    return out


# ---------------------------------------------------------------------------
# graph surfaces


class GraphSurface:
    """m-dimensional graph surface over a chart ball, in arbitrary rigid position."""

    def __init__(self, chart: Chart, chart_radius, pose_rot=None, pose_t=None, kind="custom"):
        self.chart = chart
        self.dim_m = chart.m
        self.codim_n = chart.n
        self.chart_radius = float(chart_radius)
        d = self.dim_m + self.codim_n
        self.pose_rot = np.eye(d) if pose_rot is None else np.asarray(pose_rot, dtype=float)
        self.pose_t = np.zeros(d) if pose_t is None else np.asarray(pose_t, dtype=float)
        if self.pose_rot.shape != (d, d):
            raise DomainError("pose rotation shape mismatch")
        if np.max(np.abs(self.pose_rot @ self.pose_rot.T - np.eye(d))) > 1e-10:
            raise DomainError("pose rotation not orthogonal")
        self.kind = kind

    # -- chart-frame geometry -------------------------------------------------

    @property
    def ambient_dim(self):
        return self.dim_m + self.codim_n

    def chart_point(self, u):
        """(u, g(u)) in the chart frame; batched."""
        u = np.asarray(u, dtype=float)
        return np.concatenate([u, self.chart.value(u)], axis=-1)

    def point(self, u):
        """World coordinates of the surface point over chart coordinate u."""
        return self.chart_point(u) @ self.pose_rot.T + self.pose_t

    def center(self):
        return self.point(np.zeros(self.dim_m))

    def to_chart(self, z):
        """World point -> chart-frame coordinates."""
        return (np.asarray(z, dtype=float) - self.pose_t) @ self.pose_rot

    def to_world_dir(self, v):
        return np.asarray(v, dtype=float) @ self.pose_rot.T

    def to_chart_dir(self, v):
        return np.asarray(v, dtype=float) @ self.pose_rot

    def inside_chart(self, u, slack=0.0):
        u = np.asarray(u, dtype=float)
        return np.linalg.norm(u, axis=-1) <= self.chart_radius + slack

    def frames_chart(self, u):
        """Adapted frames at u in the chart frame.

        Returns (tangent (..., d, m), normal (..., d, n), avel (..., m, m)) where
        avel's columns are the chart velocities of the tangent frame vectors.
        """
        u = np.asarray(u, dtype=float)
        m, n = self.dim_m, self.codim_n
        d = m + n
        Dg = self.chart.derivative(u, 1)  # (..., n, m)
        cols = np.zeros(u.shape[:-1] + (d, m))
        cols[..., :m, :] = np.eye(m)
        cols[..., m:, :] = Dg
        tangent = gram_schmidt(cols)
        amb = np.zeros(u.shape[:-1] + (d, n))
        amb[..., m:, :] = np.eye(n)
        proj = tangent @ np.swapaxes(tangent, -1, -2)
        normal = gram_schmidt(amb - proj @ amb)
        avel = tangent[..., :m, :]
        return tangent, normal, avel

    def frame(self, u):
        """World-frame adapted Frame at a single chart point."""
        tangent, normal, _ = self.frames_chart(np.asarray(u, dtype=float))
        R = self.pose_rot
        return Frame(self.point(u), R @ tangent, R @ normal)

    def metric(self, u):
        """First fundamental form of the chart parametrization, (..., m, m)."""
        Dg = self.chart.derivative(u, 1)
        m = self.dim_m
        return np.eye(m) + np.swapaxes(Dg, -1, -2) @ Dg

    def tangent_plane(self, u):
        tangent, _, _ = self.frames_chart(u)
        E = self.pose_rot @ tangent
        return Plane(self.point(u), E @ np.swapaxes(E, -1, -2))

    # -- construction helpers -------------------------------------------------

    def rescaled(self, lam):
        """Homothety z -> lam * z about the world origin."""
        return GraphSurface(
            ScaledChart(self.chart, lam),
            lam * self.chart_radius,
            self.pose_rot,
            lam * self.pose_t,
            kind=self.kind,
        )

    def translated(self, tau):
        return GraphSurface(
            self.chart,
            self.chart_radius,
            self.pose_rot,
            self.pose_t + np.asarray(tau, dtype=float),
            kind=self.kind,
        )

    def chart_recentered(self, u0, new_radius):
        """Move the chart origin to u0 without moving the surface."""
        u0 = np.asarray(u0, dtype=float)
        if np.linalg.norm(u0) + new_radius > self.chart_radius + 1e-12:
            raise DomainError("recentered chart exceeds original chart ball")
        shift = np.concatenate([u0, np.zeros(self.codim_n)])
        return GraphSurface(
            OffsetChart(self.chart, u0),
            new_radius,
            self.pose_rot,
            self.pose_t + self.pose_rot @ shift,
            kind=self.kind,
        )


# ---------------------------------------------------------------------------
# operations


def _ball_grid(m, r, spacing):
    axes = [np.arange(-r, r + spacing / 2, spacing) for _ in range(m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1).reshape(-1, m)
    return pts[np.linalg.norm(pts, axis=1) <= r + 1e-12]


def flatness(surface: GraphSurface, r=None, spacing=None):
    """Scale-invariant C^2 size of the chart over the ball of radius r.

    sup over a sampling grid of r^-1 |g| + |Dg| + r |D^2 g| (Frobenius norms).
    """
    if r is None:
        r = surface.chart_radius
    if r > surface.chart_radius + 1e-12:
        raise DomainError("flatness radius exceeds chart radius")
    if spacing is None:
        spacing = r / 64.0
    pts = _ball_grid(surface.dim_m, r, spacing)
    g = surface.chart.value(pts)
    Dg = surface.chart.derivative(pts, 1)
    D2g = surface.chart.derivative(pts, 2)
    term = (
        np.linalg.norm(g, axis=-1) / r
        + np.linalg.norm(Dg.reshape(len(pts), -1), axis=-1)
        + r * np.linalg.norm(D2g.reshape(len(pts), -1), axis=-1)
    )
    return float(np.max(term))


def second_fundamental_form(surface: GraphSurface, u):
    """Second fundamental form in the adapted frame: entries II(e_a, e_b) . nu_c.

    Returns shape (..., m, m, n); symmetric in (a, b).
    """
    u = np.asarray(u, dtype=float)
    if not np.all(surface.inside_chart(u, slack=-1e-12)):
        raise DomainError("point outside chart ball")
    m = surface.dim_m
    _, normal, avel = surface.frames_chart(u)
    D2g = surface.chart.derivative(u, 2)  # (..., n, m, m)
    nu_tail = normal[..., m:, :]  # (..., n, n)
    return np.einsum("...ka,...lb,...gkl,...gc->...abc", avel, avel, D2g, nu_tail)


def mean_curvature(surface: GraphSurface, u):
    """Mean curvature vector (trace of II) at u, in world coordinates."""
    II = second_fundamental_form(surface, u)
    _, normal, _ = surface.frames_chart(np.asarray(u, dtype=float))
    h_coeff = np.einsum("...aac->...c", II)
    H_chart = np.einsum("...dc,...c->...d", normal, h_coeff)
    return surface.to_world_dir(H_chart)


def grassmann_dist(P: Plane, S: Plane):
    """Frobenius norm of the projector difference between two planes."""
    if P.ambient_dim != S.ambient_dim:
        raise DomainError("planes live in different ambient dimensions")
    if P.dim != S.dim:
        raise DomainError("plane rank mismatch")
    return float(np.linalg.norm(P.projector - S.projector))


def trace_restricted_bound(A, basis):
    """Trace of a symmetric matrix restricted to a subspace, with its lower bound.

    Returns (trace_V(A), sum of the dim(V) smallest eigenvalues of A); the
    first is always >= the second.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("matrix must be square")
    if np.max(np.abs(A - A.T)) > 1e-10 * max(1.0, np.max(np.abs(A))):
        raise DomainError("matrix not symmetric")
    V = np.asarray(basis, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    Q = gram_schmidt(V)
    tr = float(np.einsum("ij,ik,jk->", A, Q, Q))
    lam = np.linalg.eigvalsh(0.5 * (A + A.T))
    return tr, float(np.sum(lam[: Q.shape[1]]))


# ---------------------------------------------------------------------------
# presets


def plane_surface(m, n, radius=1.0):
    return GraphSurface(PolynomialChart(m, n, {(0,) * m: np.zeros(n)}), radius, kind="plane")


def polynomial_surface(m, n, coeffs, radius=1.0):
    return GraphSurface(PolynomialChart(m, n, coeffs), radius, kind="polynomial")


def linear_graph(m, n, slope, radius=1.0):
    """Tilted plane as the graph of the linear map u -> slope @ u (slope is n x m)."""
    slope = np.asarray(slope, dtype=float).reshape(n, m)
    coeffs = {}
    for i in range(m):
        beta = tuple(1 if j == i else 0 for j in range(m))
        coeffs[beta] = slope[:, i]
    coeffs.setdefault((0,) * m, np.zeros(n))
    return GraphSurface(PolynomialChart(m, n, coeffs), radius, kind="polynomial")


def circle_cap(R=1.0, radius=0.9, sign=1.0):
    """Arc of a circle of radius R as a graph: g(x) = sign (R - sqrt(R^2-x^2))."""
    x = sp.symbols("x1")
    expr = sign * (R - sp.sqrt(R**2 - x**2))
    guard = lambda pts: bool(np.all(np.abs(pts) < R))
    surf = GraphSurface(SymbolicChart(1, 1, [expr], [x], guard), radius, kind="circle-cap")
    surf.params = {"R": float(R), "sign": float(sign)}
    return surf


def sphere_cap(R=1.0, radius=0.9, sign=1.0):
    """Cap of a 2-sphere of radius R as a graph over the plane."""
    x1, x2 = sp.symbols("x1 x2")
    expr = sign * (R - sp.sqrt(R**2 - x1**2 - x2**2))
    guard = lambda pts: bool(np.all(np.sum(pts**2, axis=-1) < R**2))
    surf = GraphSurface(
        SymbolicChart(2, 1, [expr], [x1, x2], guard), radius, kind="sphere-cap"
    )
    surf.params = {"R": float(R), "sign": float(sign)}
    return surf


def scherk_surface(c=0.02, radius=1.3):
    """Scaled doubly periodic minimal graph g = (log cos(c x2) - log cos(c x1)) / c."""
    x1, x2 = sp.symbols("x1 x2")
    expr = (sp.log(sp.cos(c * x2)) - sp.log(sp.cos(c * x1))) / c
    guard = lambda pts: bool(np.all(np.abs(pts) * c < np.pi / 2))
    surf = GraphSurface(SymbolicChart(2, 1, [expr], [x1, x2], guard), radius, kind="scherk")
    surf.params = {"c": float(c)}
    return surf


def holomorphic_surface(c=0.02, radius=1.3, power=2):
    """Minimal 2-surface in R^4: graph of the holomorphic map z -> c z^power."""
    if power == 2:
        coeffs = {(2, 0): [c, 0.0], (0, 2): [-c, 0.0], (1, 1): [0.0, 2 * c]}
    elif power == 3:
        coeffs = {
            (3, 0): [c, 0.0],
            (1, 2): [-3 * c, 0.0],
            (2, 1): [0.0, 3 * c],
            (0, 3): [0.0, -c],
        }
    else:
        raise DomainError("only powers 2 and 3 are provided")
    surf = GraphSurface(PolynomialChart(2, 2, coeffs), radius, kind="holomorphic")
    surf.params = {"c": float(c), "power": int(power)}
    return surf


# ---------------------------------------------------------------------------
# serialization (structured text)


def surface_to_text(surface: GraphSurface):
    """Serialize a surface built from a preset or polynomial chart."""
    lines = [surface.kind, f"{surface.dim_m} {surface.codim_n} {surface.chart_radius!r}"]
    if surface.kind in ("plane",):
        pass
    elif surface.kind in ("polynomial", "custom-coefficients", "custom"):
        chart = surface.chart
        if not isinstance(chart, PolynomialChart):
            raise DomainError("only polynomial charts serialize coefficient lists")
        lines.append(str(len(chart.coeffs)))
        for beta, cvec in chart.coeffs.items():
            lines.append(
                " ".join(str(b) for b in beta) + " | " + " ".join(repr(float(v)) for v in cvec)
            )
    elif surface.kind in ("circle-cap", "sphere-cap"):
        lines.append(f"{surface.params['R']!r} {surface.params['sign']!r}")
    elif surface.kind == "scherk":
        lines.append(repr(surface.params["c"]))
    elif surface.kind == "holomorphic":
        lines.append(f"{surface.params['c']!r} {surface.params['power']}")
    else:
        raise DomainError(f"kind {surface.kind!r} is not serializable")
    return "\n".join(lines) + "\n"


def surface_from_text(text):
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    kind = lines[0]
    m_s, n_s, r_s = lines[1].split()
    m, n, radius = int(m_s), int(n_s), float(r_s)
    if kind == "plane":
        return plane_surface(m, n, radius)
    if kind in ("polynomial", "custom-coefficients", "custom"):
        count = int(lines[2])
        coeffs = {}
        for ln in lines[3 : 3 + count]:
            left, right = ln.split("|")
            beta = tuple(int(t) for t in left.split())
            coeffs[beta] = np.array([float(t) for t in right.split()])
        return polynomial_surface(m, n, coeffs, radius)
    if kind == "circle-cap":
        R, sign = (float(t) for t in lines[2].split())
        return circle_cap(R, radius, sign)
    if kind == "sphere-cap":
        R, sign = (float(t) for t in lines[2].split())
        return sphere_cap(R, radius, sign)
    if kind == "scherk":
        return scherk_surface(float(lines[2]), radius)
    if kind == "holomorphic":
        c_s, p_s = lines[2].split()
        return holomorphic_surface(float(c_s), radius, int(p_s))
    raise DomainError(f"unknown surface kind {kind!r}")
