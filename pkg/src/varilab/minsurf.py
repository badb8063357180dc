"""Mean curvature of normal graphs, its linearization, and the graph Newton solver.

A normal section f over a surface M defines the graph x + f(x); its mean
curvature is computed from the pushed-forward basis w_i = e_i + D_{e_i} f and
the first fundamental form g_ij = w_i . w_j.  The solver drives the graph
mean curvature to zero with the frozen linearization L_M.
"""

import numpy as np

from .charts import fit_polynomial_chart
from .errors import ConvergenceError, DomainError
from .jacobi import SectionOperator, apply_jacobi, dirichlet_solve
from .sections import NormalSection, SectionSpace, section_dirderiv
from .surfaces import GraphSurface, mean_curvature

METRIC_COND_MAX = 1e6


def _graph_fields(space: SectionSpace, section: NormalSection):
    """w basis, metric, and D_{w_i} w_j for the graph of the section, nodewise."""
    m = space.m
    D1 = section_dirderiv(space, section, order=1)  # shape + (m, d)
    D2 = section_dirderiv(space, section, order=2)  # shape + (m, m, d)
    # V[..., j, :] = derivative of the section along the frame vector e_j
    V = np.einsum("...kj,...kd->...jd", space.avel, D1)
    W = np.swapaxes(space.tangent, -1, -2) + V  # (..., m, d) rows w_j
    g = np.einsum("...id,...jd->...ij", W, W)
    # dV[..., l, j, :] = chart derivative along u_l of the field V_j
    davel = space.dtan[..., :m, :]  # (..., l, k, j) chart derivative of avel
    dV = np.einsum("...lkj,...kd->...ljd", davel, D1) + np.einsum(
        "...kj,...lkd->...ljd", space.avel, D2
    )
    dW = np.swapaxes(space.dtan, -1, -2) + dV  # (..., l, j, d)
    # DW[..., i, j, :] = D_{w_i} w_j = D_{e_i} (e_j + D_{e_j} f)
    DW = np.einsum("...li,...ljd->...ijd", space.avel, dW)
    return W, g, DW


def graph_mean_curvature_field(space: SectionSpace, section: NormalSection):
    """Mean curvature vectors of the graph at all nodes (junk on the outer 2 rings).

    Returns (H, metric_condition); H has shape grid.shape + (d,).
    """
    W, g, DW = _graph_fields(space, section)
    cond = float(np.max(np.linalg.cond(g)))
    if cond > METRIC_COND_MAX:
        raise DomainError(f"graph metric nearly singular (cond {cond:.2e})")
    ginv = np.linalg.inv(g)
    v = np.einsum("...ij,...ijd->...d", ginv, DW)
    proj = np.einsum("...hk,...hd,...ke->...de", ginv, W, W)
    H = v - np.einsum("...de,...e->...d", proj, v)
    return H, cond


def graph_mean_curvature(space: SectionSpace, section: NormalSection, u):
    """Mean curvature vector of the graph over the node closest to chart point u.

    The result is orthogonal to the graph tangent basis by construction.
    """
    grid = space.grid
    u = np.asarray(u, dtype=float).reshape(space.m)
    ids = tuple(int(round((ui + grid.radius) / grid.h)) for ui in u)
    if any(i < 2 or i > grid.n_axis - 3 for i in ids):
        raise DomainError("graph mean curvature needs an interior node (margin 2)")
    H, _ = graph_mean_curvature_field(space, section)
    return H[ids]


def holder_quotient(space: SectionSpace, field, power=0.5, mask=None):
    """Sampled Hoelder quotient of a nodewise field over dyadic axis separations."""
    grid = space.grid
    field = np.asarray(field, dtype=float)
    if field.ndim == len(grid.shape):
        field = field[..., None]
    if mask is None:
        mask = grid.interior_mask(2)
    worst = 0.0
    sep = 1
    while sep < grid.n_axis // 2:
        for ax in range(grid.m):
            sl_a = [slice(None)] * grid.m
            sl_b = [slice(None)] * grid.m
            sl_a[ax] = slice(None, -sep)
            sl_b[ax] = slice(sep, None)
            both = mask[tuple(sl_a)] & mask[tuple(sl_b)]
            if not np.any(both):
                continue
            diff = np.linalg.norm(
                (field[tuple(sl_a)] - field[tuple(sl_b)]).reshape(both.shape + (-1,)), axis=-1
            )
            worst = max(worst, float(np.max(diff[both])) / (sep * grid.h) ** power)
        sep *= 2
    return worst


def c2half_norm(space: SectionSpace, section: NormalSection, mask=None):
    """Discrete proxy for the C^{2,1/2} norm: nodal sizes plus a Hoelder quotient."""
    grid = space.grid
    if mask is None:
        mask = grid.interior_mask(2)
    D1 = section_dirderiv(space, section, order=1)
    D2 = section_dirderiv(space, section, order=2)
    sup0 = section.sup(mask)
    sup1 = float(np.max(np.linalg.norm(D1[mask].reshape(np.count_nonzero(mask), -1), axis=-1)))
    sup2 = float(np.max(np.linalg.norm(D2[mask].reshape(np.count_nonzero(mask), -1), axis=-1)))
    return max(sup0, sup1, sup2) + holder_quotient(space, D2, mask=mask)


def linearization_residual(space: SectionSpace, section: NormalSection, check_minimal=True):
    """C^{1/2}-style size of  H_graph(f) - L_M f  over the interior.

    Returns (total, info); total = sup-node norm plus the sampled Hoelder
    quotient of the residual field.
    """
    if check_minimal:
        us = space.grid.flat_nodes()[:: max(1, space.grid.n_nodes // 64)]
        hm = np.linalg.norm(mean_curvature(space.surface, us), axis=-1)
        if np.max(hm) > 1e-8:
            raise DomainError("carrying surface is not minimal")
    H, _ = graph_mean_curvature_field(space, section)
    Lf = apply_jacobi(space, section)
    R = H - Lf.values
    mask = space.grid.interior_mask(2)
    sup = float(np.max(np.linalg.norm(R[mask], axis=-1)))
    quot = holder_quotient(space, np.where(mask[..., None], R, 0.0), mask=mask)
    return sup + quot, {"sup": sup, "holder": quot}


def divergence_expansion_residual(space: SectionSpace, section: NormalSection, phi: NormalSection):
    """Residual of the surface-divergence expansion for a pulled-back normal field.

    R(x) = Div_graph(phi o p)(x + f(x)) - (Df : Dphi - 2 II_f : II_phi)(x),
    nodewise on the margin-2 interior.  Returns (R field, report dict).
    """
    W, g, _ = _graph_fields(space, section)
    ginv = np.linalg.inv(g)
    Dphi1 = section_dirderiv(space, phi, order=1)
    Vphi = np.einsum("...kj,...kd->...jd", space.avel, Dphi1)  # D_{e_j} phi
    div_graph = np.einsum("...ij,...id,...jd->...", ginv, W, Vphi)
    Df1 = section_dirderiv(space, section, order=1)
    Vf = np.einsum("...kj,...kd->...jd", space.avel, Df1)
    pairing = np.einsum("...jd,...jd->...", Vf, Vphi)
    ii_f = np.einsum("...abc,...c->...ab", space.II, section.coeffs)
    ii_phi = np.einsum("...abc,...c->...ab", space.II, phi.coeffs)
    pairing = pairing - 2.0 * np.einsum("...ab,...ab->...", ii_f, ii_phi)
    R = div_graph - pairing
    mask = space.grid.interior_mask(2)
    dphi_norm = np.linalg.norm(Vphi, axis=(-2, -1))
    df_norm = np.linalg.norm(Vf, axis=(-2, -1))
    from .surfaces import flatness

    delta = flatness(space.surface)
    denom = dphi_norm * (delta * np.linalg.norm(section.values, axis=-1) + df_norm) ** 2
    sup_R = float(np.max(np.abs(R[mask])))
    sup_denom = float(np.max(denom[mask]))
    report = {
        "sup_residual": sup_R,
        "sup_denominator": sup_denom,
        "ratio": sup_R / sup_denom if sup_denom > 0 else np.inf if sup_R > 0 else 0.0,
    }
    return np.where(mask, R, 0.0), report


def gradient_tilt_bound_check(space: SectionSpace, section: NormalSection):
    """Per-node comparison |Df|^2 <= C (delta^2 |f|^2 + |T_x M - T_graph|^2).

    Returns (lhs field, rhs field, measured C over nodes where rhs > 0).
    """
    from .surfaces import flatness

    W, g, _ = _graph_fields(space, section)
    Df1 = section_dirderiv(space, section, order=1)
    Vf = np.einsum("...kj,...kd->...jd", space.avel, Df1)
    lhs = np.sum(Vf**2, axis=(-2, -1))
    ginv = np.linalg.inv(g)
    P_graph = np.einsum("...ij,...id,...je->...de", ginv, W, W)
    P_M = space.tangent @ np.swapaxes(space.tangent, -1, -2)
    tilt_sq = np.sum((P_graph - P_M) ** 2, axis=(-2, -1))
    delta = flatness(space.surface)
    rhs = delta**2 * np.sum(section.values**2, axis=-1) + tilt_sq
    mask = space.grid.interior_mask(2)
    lhs_m, rhs_m = lhs[mask], rhs[mask]
    good = rhs_m > 1e-14 * max(1.0, float(np.max(lhs_m, initial=0.0)))
    c_meas = float(np.max(lhs_m[good] / rhs_m[good])) if np.any(good) else 0.0
    return np.where(mask, lhs, 0.0), np.where(mask, rhs, 0.0), c_meas


def solve_mss(
    space: SectionSpace,
    boundary,
    tol=1e-8,
    max_iters=10,
    return_extension=False,
):
    """Solve the minimal-graph system with given boundary data.

    Boundary data is supplied on the two outer node rings (callable on chart
    points, ambient vectors or normal coefficients).  Newton iterates with the
    frozen linearization until the nodewise graph mean curvature drops below
    ``tol`` on the margin-2 interior.
    """
    margin = 2
    op = SectionOperator(space, margin=margin)
    from .jacobi import _coeff_data_from_boundary

    data = _coeff_data_from_boundary(space, boundary, margin)
    x, resid0 = op.solve(np.zeros(op.n_unknowns), data)
    h_ext = NormalSection(space, coeffs=op.scatter(x, data))
    f = NormalSection(space, coeffs=h_ext.coeffs.copy())
    interior = op.interior
    residuals = []
    for it in range(max_iters + 1):
        H, _ = graph_mean_curvature_field(space, f)
        r_coeff = np.einsum("...d,...dc->...c", H, space.normal)
        res = float(np.max(np.linalg.norm(r_coeff[interior], axis=-1)))
        residuals.append(res)
        if res <= tol:
            break
        if it == max_iters or (len(residuals) > 2 and res > 10.0 * residuals[-2] and res > 1.0):
            raise ConvergenceError(
                "minimal-graph Newton did not converge", residual=res, iterations=it
            )
        upd, _ = op.solve(r_coeff[interior].reshape(-1), np.zeros_like(data))
        coeffs = f.coeffs.copy()
        coeffs[interior] -= upd.reshape(-1, space.n)
        f = NormalSection(space, coeffs=coeffs)
    f.info = {
        "newton_iters": len(residuals) - 1,
        "residuals": residuals,
        "extension_residual": resid0,
        "deviation_from_extension": float(
            np.max(np.linalg.norm(f.values - h_ext.values, axis=-1))
        ),
    }
    if return_extension:
        return f, h_ext
    return f


def graph_to_surface(space: SectionSpace, section: NormalSection, fit_degree=6, fit_radius=None):
    """Graph of a normal section as a fresh polynomial-chart surface.

    Fits base-plane samples of x + f(x) by least squares; the fit residual is
    attached to the returned surface as ``fit_residual``.  The result shares
    the pose of the carrying surface.
    """
    base = space.surface
    grid = space.grid
    m, n = space.m, space.n
    if fit_radius is None:
        fit_radius = grid.radius
    us = grid.flat_nodes()
    keep = np.linalg.norm(us, axis=1) <= fit_radius + 1e-12
    pts = base.chart_point(us[keep]) + section.values.reshape(-1, m + n)[keep]
    chart, resid = fit_polynomial_chart(pts[:, :m], pts[:, m:], m, n, fit_degree)
    out = GraphSurface(
        chart,
        fit_radius * 1.05,
        pose_rot=base.pose_rot,
        pose_t=base.pose_t,
        kind="polynomial",
    )
    out.fit_residual = resid
    return out
