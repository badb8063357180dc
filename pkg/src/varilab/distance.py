"""Closest-point projection onto a graph surface and calculus of the distance field."""

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryError, ConvergenceError, DomainError
from .surfaces import GraphSurface, Plane, flatness, grassmann_dist, second_fundamental_form

NEWTON_MAX_ITERS = 50
NEWTON_TOL = 1e-12


@dataclass
class ProjectionResult:
    query: np.ndarray
    foot: np.ndarray
    dist: float
    normal_dir: np.ndarray  # None when dist == 0
    newton_iters: int
    foot_chart: np.ndarray  # chart coordinate of the foot


def _foot_chart_newton(surface: GraphSurface, zc, tol=NEWTON_TOL, max_iters=NEWTON_MAX_ITERS):
    """Vectorized Newton solve of the first-order optimality condition.

    zc: chart-frame queries, shape (N, m+n).  Returns (u, iters).
    """
    m, n = surface.dim_m, surface.codim_n
    zx, zy = zc[:, :m], zc[:, m:]
    u = zx.copy()
    iters = np.zeros(len(zc), dtype=int)
    active = np.ones(len(zc), dtype=bool)
    for it in range(max_iters):
        ua = u[active]
        g = surface.chart.value(ua)
        Dg = surface.chart.derivative(ua, 1)
        D2g = surface.chart.derivative(ua, 2)
        ry = g - zy[active]
        # F_i = (u - zx)_i + sum_a ry_a Dg[a, i]
        F = (ua - zx[active]) + np.einsum("pa,pai->pi", ry, Dg)
        J = (
            np.eye(m)
            + np.einsum("pai,paj->pij", Dg, Dg)
            + np.einsum("pa,paij->pij", ry, D2g)
        )
        scale = 1.0 + np.linalg.norm(zc[active], axis=1)
        done = np.linalg.norm(F, axis=1) <= tol * scale
        if np.any(done):
            idx = np.flatnonzero(active)[done]
            active_mask = np.ones(len(ua), dtype=bool)
            active_mask[done] = False
            active = active.copy()
            active[idx] = False
            ua = ua[active_mask]
            if ua.size == 0:
                break
            F, J = F[active_mask], J[active_mask]
        try:
            step = np.linalg.solve(J, F[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Newton system in closest-point solve")
        u[active] -= step
        iters[active] = it + 1
        if np.any(np.linalg.norm(u[active], axis=1) > 2.0 * surface.chart_radius + 1.0):
            raise ConvergenceError("closest-point iterate left the chart region")
    else:
        if np.any(active):
            raise ConvergenceError(
                "closest-point Newton did not converge (query outside the projection tube?)",
                iterations=max_iters,
            )
    return u, iters


def closest_point_batch(surface: GraphSurface, z):
    """Feet, distances, chart coordinates, and iteration counts for queries z (N, m+n)."""
    z = np.asarray(z, dtype=float).reshape(-1, surface.ambient_dim)
    zc = surface.to_chart(z)
    u, iters = _foot_chart_newton(surface, zc)
    r = np.linalg.norm(u, axis=1)
    if np.any(r > surface.chart_radius + 1e-9):
        raise BoundaryError("closest-point foot hit the chart boundary")
    feet = surface.point(u)
    dist = np.linalg.norm(z - feet, axis=1)
    return feet, dist, u, iters


def closest_point(surface: GraphSurface, z):
    """Unique closest point of z on the surface, solved in chart coordinates."""
    z = np.asarray(z, dtype=float)
    feet, dist, u, iters = closest_point_batch(surface, z[None, :])
    d = float(dist[0])
    ndir = (z - feet[0]) / d if d > 0 else None
    return ProjectionResult(z, feet[0], d, ndir, int(iters[0]), u[0])


def _shape_operator(surface: GraphSurface, u, offset_chart):
    """II contracted with a chart-frame normal offset: matrix S_ab = II(e_a,e_b) . offset."""
    II = second_fundamental_form(surface, u)
    _, normal, _ = surface.frames_chart(u)
    coeff = offset_chart @ normal  # components of the offset on the normal frame
    return np.einsum("abc,c->ab", II, coeff)


def projection_jacobian(surface: GraphSurface, z):
    """Differential of the closest-point map at z, as an ambient (m+n)x(m+n) matrix.

    In the adapted frame at the foot this is blockdiag((Id - S)^-1, 0) where S
    is the second fundamental form contracted with the offset z - p(z).
    """
    z = np.asarray(z, dtype=float)
    res = closest_point(surface, z)
    u = res.foot_chart
    tangent, _, _ = surface.frames_chart(u)
    offset_chart = surface.to_chart_dir(z - res.foot)
    S = _shape_operator(surface, u, offset_chart)
    eig = np.linalg.eigvalsh(S)
    if np.max(np.abs(eig)) >= 1.0:
        raise DomainError("query beyond the focal distance: Id - II_(z-p) is singular")
    A = np.linalg.inv(np.eye(surface.dim_m) - S)
    E = surface.pose_rot @ tangent
    return E @ A @ E.T


def sq_dist_hessian(surface: GraphSurface, z):
    """Hessian of half the squared distance to the surface at z.

    Eigenstructure: tangential eigenvalues -d k_j / (1 - k_j d) for the
    principal curvatures k_j of II in the direction (z - p(z))/d, and
    eigenvalue 1 on the normal space.  At d = 0 the limit blockdiag(0, Id) is
    returned.
    """
    z = np.asarray(z, dtype=float)
    res = closest_point(surface, z)
    u = res.foot_chart
    tangent, normal, _ = surface.frames_chart(u)
    E_t = surface.pose_rot @ tangent
    E_n = surface.pose_rot @ normal
    P_normal = E_n @ E_n.T
    d = res.dist
    if d == 0.0:
        return P_normal
    ndir_chart = surface.to_chart_dir(res.normal_dir)
    S = _shape_operator(surface, u, ndir_chart)
    kappa, vecs = np.linalg.eigh(S)
    if np.max(np.abs(kappa * d)) >= 1.0:
        raise DomainError("query beyond the focal distance of the surface")
    tang_eigs = -d * kappa / (1.0 - kappa * d)
    W = E_t @ vecs  # world-frame principal tangent directions
    return W @ np.diag(tang_eigs) @ W.T + P_normal


def elliptic_inequality_check(surface: GraphSurface, z, L: Plane, delta=None):
    """Both sides of the distance-field ellipticity inequality at z.

    lhs = trace_L(D^2 (d^2/2)) + delta^2 d^2, rhs = |L - T_p M|^2 / 4.  The
    inequality lhs >= rhs holds for minimal surfaces; delta defaults to the
    measured flatness of the chart.
    """
    if delta is None:
        delta = flatness(surface)
    res = closest_point(surface, np.asarray(z, dtype=float))
    H = sq_dist_hessian(surface, z)
    lhs = float(np.trace(L.projector @ H)) + delta**2 * res.dist**2
    rhs = 0.25 * grassmann_dist(L, surface.tangent_plane(res.foot_chart)) ** 2
    return lhs, rhs


def lip_graph_bounds(surface: GraphSurface, section_fn, z, sample_radius=None, grid_n=2001):
    """Distance to the graph of a short normal section versus its vertical proxy.

    Returns (d_Gamma(z), |z - p(z) - f(p(z))|); the first is computed by grid
    brute force over the graph, and the sandwich first <= second <= 3*first
    holds whenever Lip(f) <= 1.  Raises if the sampled Lipschitz constant of
    the section exceeds 1.
    """
    z = np.asarray(z, dtype=float)
    m = surface.dim_m
    if sample_radius is None:
        sample_radius = surface.chart_radius
    n_axis = max(9, int(round(grid_n ** (1.0 / m))))

    def graph_points(center, half_width):
        axes = [
            np.linspace(c - half_width, c + half_width, n_axis) for c in np.atleast_1d(center)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        us = np.stack(mesh, axis=-1).reshape(-1, m)
        us = us[np.linalg.norm(us, axis=1) <= sample_radius + 1e-12]
        base = surface.point(us)
        offsets = np.asarray(section_fn(us), dtype=float)
        return us, base, base + offsets, offsets

    us, base, graph_pts, offsets = graph_points(np.zeros(m), sample_radius)
    # sampled Lipschitz audit of the section along the surface
    dbase = np.linalg.norm(base[1:] - base[:-1], axis=1)
    doff = np.linalg.norm(offsets[1:] - offsets[:-1], axis=1)
    ok = dbase > 0
    lip = np.max(doff[ok] / dbase[ok]) if np.any(ok) else 0.0
    if lip > 1.0 + 1e-9:
        raise DomainError(f"section is not 1-Lipschitz on samples (Lip ~ {lip:.3f})")
    # multi-stage grid refinement around the argmin
    half = sample_radius
    best = us[int(np.argmin(np.linalg.norm(graph_pts - z, axis=1)))]
    d_graph = float(np.min(np.linalg.norm(graph_pts - z, axis=1)))
    for _ in range(5):
        half = 4.0 * (2.0 * half / (n_axis - 1))
        us, _, graph_pts, _ = graph_points(best, half)
        if len(us) == 0:
            break
        k = int(np.argmin(np.linalg.norm(graph_pts - z, axis=1)))
        best = us[k]
        d_graph = min(d_graph, float(np.linalg.norm(graph_pts[k] - z)))
    res = closest_point(surface, z)
    f_at_foot = np.asarray(section_fn(res.foot_chart[None, :]), dtype=float)[0]
    proxy = float(np.linalg.norm(z - res.foot - f_at_foot))
    return d_graph, proxy
