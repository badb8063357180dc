"""Discrete varifolds: weighted, tangent-decorated point clouds with integer density.

All integrals of the underlying measure are weighted sums over atoms,
integral( F ) = sum_a  weight_a * density_a * F(z_a);
weights are plain area-quadrature weights of the generating patch, densities
carry the multiplicity.  Cylinder membership is closed, with boundary atoms
weighted fully.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .distance import closest_point_batch
from .errors import DomainError, GeneratorError, HypothesisError
from .surfaces import GraphSurface, Plane, gram_schmidt, mean_curvature

_SHEET_FD_STEP = 1e-6


def unit_ball_volume(m):
    return math.pi ** (m / 2.0) / math.gamma(m / 2.0 + 1.0)


@dataclass
class Cylinder:
    """Closed cylinder: points with |P_plane(z - center)| <= radius."""

    center: np.ndarray
    plane: Plane
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0:
            raise DomainError("cylinder radius must be positive")

    def contains(self, points):
        rel = np.asarray(points, dtype=float) - self.center
        horiz = rel @ self.plane.projector.T
        return np.linalg.norm(horiz, axis=-1) <= self.radius + 1e-12

    def rescaled(self, lam):
        return Cylinder(lam * self.center, self.plane, lam * self.radius)


def vertical_cylinder(m, n, radius=1.0, center=None):
    c = np.zeros(m + n) if center is None else np.asarray(center, dtype=float)
    return Cylinder(c, Plane.coordinate(m, n), radius)


class DiscreteVarifold:
    """Finite atom list (point, tangent projector, weight, integer density)."""

    def __init__(self, m, n, points, tangents, weights, densities, provenance="", refiner=None):
        self.m = int(m)
        self.n = int(n)
        self.points = np.asarray(points, dtype=float).reshape(-1, self.m + self.n)
        self.tangents = np.asarray(tangents, dtype=float).reshape(
            -1, self.m + self.n, self.m + self.n
        )
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        self.densities = np.asarray(densities).reshape(-1).astype(int)
        if np.any(self.weights <= 0):
            raise GeneratorError("atom weights must be positive")
        if np.any(self.densities < 1):
            raise GeneratorError("atom densities must be positive integers")
        self.provenance = provenance
        self.refiner = refiner

    def __len__(self):
        return len(self.points)

    @property
    def ambient_dim(self):
        return self.m + self.n

    def mass_weights(self):
        return self.weights * self.densities

    def restricted(self, mask):
        return DiscreteVarifold(
            self.m,
            self.n,
            self.points[mask],
            self.tangents[mask],
            self.weights[mask],
            self.densities[mask],
            provenance=self.provenance,
            refiner=self.refiner,
        )

    def transformed(self, rot=None, shift=None):
        d = self.ambient_dim
        rot = np.eye(d) if rot is None else np.asarray(rot, dtype=float)
        shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
        return DiscreteVarifold(
            self.m,
            self.n,
            self.points @ rot.T + shift,
            np.einsum("ab,pbc,dc->pad", rot, self.tangents, rot),
            self.weights,
            self.densities,
            provenance=self.provenance,
        )

    def rescaled(self, lam):
        """Homothety about the origin; weights scale with the m-area."""
        return DiscreteVarifold(
            self.m,
            self.n,
            lam * self.points,
            self.tangents,
            lam**self.m * self.weights,
            self.densities,
            provenance=self.provenance,
        )


# ---------------------------------------------------------------------------
# text round trip


def varifold_to_text(V: DiscreteVarifold):
    lines = [f"{V.m} {V.n}"]
    for p, T, w, q in zip(V.points, V.tangents, V.weights, V.densities):
        parts = [repr(float(x)) for x in p] + [repr(float(x)) for x in T.reshape(-1)]
        parts.append(repr(float(w)))
        parts.append(str(int(q)))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def varifold_from_text(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    m, n = (int(t) for t in lines[0].split())
    d = m + n
    pts, tans, ws, qs = [], [], [], []
    for ln in lines[1:]:
        toks = ln.split()
        if len(toks) != d + d * d + 2:
            raise DomainError("malformed varifold atom line")
        vals = [float(t) for t in toks[:-1]]
        pts.append(vals[:d])
        tans.append(np.array(vals[d : d + d * d]).reshape(d, d))
        ws.append(vals[d + d * d])
        qs.append(int(toks[-1]))
    return DiscreteVarifold(m, n, np.array(pts), np.array(tans), np.array(ws), np.array(qs))


# ---------------------------------------------------------------------------
# generators


def _cell_overlap_weights(m, center, radius, grid_n, subsample=None):
    """Cell centers and exact-ish areas of cell intersect ball(center, radius).

    Cells tile the bounding box of the ball with grid_n cells per axis; cells
    fully outside are dropped, partial cells get midpoint-subsampled overlap
    areas.  For m = 1 every cell is interior by construction.
    """
    center = np.asarray(center, dtype=float).reshape(m)
    step = 2.0 * radius / grid_n
    ax = center[0] - radius + step * (np.arange(grid_n) + 0.5)
    if m == 1:
        return ax[:, None], np.full(grid_n, step)
    if subsample is None:
        subsample = 256
    axes = [c - radius + step * (np.arange(grid_n) + 0.5) for c in center]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack(mesh, axis=-1).reshape(-1, m)
    dist = np.linalg.norm(centers - center, axis=1)
    half_diag = step * math.sqrt(m) / 2.0
    inside = dist <= radius - half_diag
    outside = dist > radius + half_diag
    partial = ~inside & ~outside
    weights = np.zeros(len(centers))
    weights[inside] = step**m
    if np.any(partial):
        # partial cells: subsampled overlap area, atom moved to the overlap
        # centroid so that point-in-ball membership matches the carried area
        offs = (np.arange(subsample) + 0.5) / subsample - 0.5
        sub_mesh = np.meshgrid(*([offs * step] * m), indexing="ij")
        sub = np.stack(sub_mesh, axis=-1).reshape(-1, m)
        pc = centers[partial]
        frac = np.zeros(len(pc))
        centroid = np.array(pc)
        block = 64
        for i in range(0, len(pc), block):
            pts = pc[i : i + block, None, :] + sub[None, :, :]
            ok = np.linalg.norm(pts - center, axis=-1) <= radius
            frac[i : i + block] = ok.mean(axis=1)
            counts = np.maximum(ok.sum(axis=1), 1)
            centroid[i : i + block] = np.where(
                frac[i : i + block, None] > 0,
                np.einsum("bsd,bs->bd", pts, ok) / counts[:, None],
                pc[i : i + block],
            )
        weights[partial] = frac * step**m
        centers = centers.copy()
        centers[partial] = centroid
    keep = weights > 0
    return centers[keep], weights[keep]


def gen_graph_sheets(
    surface: GraphSurface,
    sheets,
    base_radius,
    grid_n,
    base_center=None,
    provenance="graph-sheets",
    attach_refiner=True,
):
    """Varifold of graphs of normal sections over a surface.

    ``sheets`` is a list of (coeff_fn, density): coeff_fn maps chart points
    (N, m) to normal-frame coefficients (N, n).  Atoms sit over a uniform
    cell grid covering the chart ball of the given radius; weights carry the
    exact cell-ball overlap area times the graph area factor.
    """
    m, n = surface.dim_m, surface.codim_n
    d = m + n
    if base_center is None:
        base_center = np.zeros(m)
    if np.linalg.norm(base_center) + base_radius > surface.chart_radius + 1e-9:
        raise GeneratorError("sheet generation region exceeds the chart ball")
    us, cell_w = _cell_overlap_weights(m, base_center, base_radius, grid_n)
    N = len(us)
    pts, tans, ws, qs = [], [], [], []
    for coeff_fn, dens in sheets:
        def offset(uu, coeff_fn=coeff_fn):
            _, normal, _ = surface.frames_chart(uu)
            c = np.asarray(coeff_fn(uu), dtype=float).reshape(len(uu), n)
            return np.einsum("pdc,pc->pd", normal, c)

        pos_chart = surface.chart_point(us) + offset(us)
        # columns of the parametrization differential, by small-step FD
        cols = np.zeros((N, d, m))
        h = _SHEET_FD_STEP * (1.0 + np.linalg.norm(us, axis=1, keepdims=True))
        for k in range(m):
            e = np.zeros(m)
            e[k] = 1.0
            up = us + h * e
            um = us - h * e
            cols[:, :, k] = (
                (surface.chart_point(up) + offset(up))
                - (surface.chart_point(um) + offset(um))
            ) / (2 * h)
        gram = np.einsum("pdi,pdj->pij", cols, cols)
        area = np.sqrt(np.linalg.det(gram))
        frame = gram_schmidt(cols)
        proj_chart = frame @ np.swapaxes(frame, -1, -2)
        R = surface.pose_rot
        pts.append(pos_chart @ R.T + surface.pose_t)
        tans.append(np.einsum("ab,pbc,dc->pad", R, proj_chart, R))
        ws.append(cell_w * area)
        qs.append(np.full(N, int(dens)))
    V = DiscreteVarifold(
        m,
        n,
        np.concatenate(pts),
        np.concatenate(tans),
        np.concatenate(ws),
        np.concatenate(qs),
        provenance=provenance,
    )
    if attach_refiner:
        V.refiner = lambda c, r, g: gen_graph_sheets(
            surface, sheets, r, g, base_center=c, provenance=provenance, attach_refiner=False
        )
    return V


def gen_plane(m, n, Q=1, radius=1.0, grid_n=64, slope=None, height=None):
    """Plane patch of multiplicity Q, optionally tilted (graph of a linear map)."""
    from .surfaces import plane_surface

    slope = np.zeros((n, m)) if slope is None else np.asarray(slope, dtype=float).reshape(n, m)
    height = np.zeros(n) if height is None else np.asarray(height, dtype=float).reshape(n)
    surf = plane_surface(m, n, radius=radius * 1.0001)
    fn = lambda us: height + us @ slope.T
    return gen_graph_sheets(
        surf, [(fn, Q)], radius, grid_n, provenance=f"plane Q={Q}"
    )


def gen_plane_union(m, n, poses, radius=1.0, grid_n=64, Q=1):
    """Union of plane patches given by pose rotations (each a graph over its own plane)."""
    from .surfaces import plane_surface

    parts = []
    for rot in poses:
        surf = GraphSurface(
            plane_surface(m, n, radius=radius * 1.0001).chart,
            radius * 1.0001,
            pose_rot=rot,
        )
        parts.append(
            gen_graph_sheets(
                surf,
                [(lambda us: np.zeros((len(us), n)), Q)],
                radius,
                grid_n,
                provenance="plane-union",
                attach_refiner=False,
            )
        )
    V = DiscreteVarifold(
        m,
        n,
        np.concatenate([p.points for p in parts]),
        np.concatenate([p.tangents for p in parts]),
        np.concatenate([p.weights for p in parts]),
        np.concatenate([p.densities for p in parts]),
        provenance="plane-union",
    )
    return V


def gen_minimal_graph(surface: GraphSurface, Q=1, radius=None, grid_n=64):
    """Multiplicity-Q copy of a surface patch (atoms on the surface itself)."""
    if radius is None:
        radius = surface.chart_radius / 1.05
    return gen_graph_sheets(
        surface,
        [(lambda us: np.zeros((len(us), surface.codim_n)), Q)],
        radius,
        grid_n,
        provenance=f"minimal-graph Q={Q} kind={surface.kind}",
    )


def gen_varifold(spec):
    """Dispatcher from a flat parameter mapping (CLI front end)."""
    kind = spec.get("kind")
    m = int(spec.get("m", 1))
    n = int(spec.get("n", 1))
    Q = int(spec.get("q", 1))
    radius = float(spec.get("radius", 1.0))
    grid_n = int(spec.get("grid", 64))
    if kind == "plane":
        slope = None
        if "slope" in spec:
            slope = np.array([float(t) for t in str(spec["slope"]).split()]).reshape(n, m)
        height = None
        if "height" in spec:
            height = np.array([float(t) for t in str(spec["height"]).split()])
        return gen_plane(m, n, Q, radius, grid_n, slope=slope, height=height)
    if kind == "two-planes-orthogonal":
        if (m, n) != (2, 2):
            raise GeneratorError("orthogonal plane union is a codimension-2 example (m=n=2)")
        rot = np.eye(4)[[2, 3, 0, 1]]
        return gen_plane_union(2, 2, [np.eye(4), rot], radius, grid_n, Q)
    if kind == "two-sheets":
        height = float(spec.get("height", 0.1))
        slope = float(spec.get("slope", 0.0))
        from .surfaces import plane_surface

        surf = plane_surface(m, n, radius=radius * 1.0001)
        up = lambda us: np.column_stack([height + slope * us[:, 0]] + [np.zeros(len(us))] * (n - 1))
        dn = lambda us: -up(us)
        return gen_graph_sheets(surf, [(up, 1), (dn, 1)], radius, grid_n, provenance="two-sheets")
    if kind == "minimal-graph":
        from .surfaces import holomorphic_surface, plane_surface, scherk_surface

        shape = spec.get("surface", "scherk")
        c = float(spec.get("c", 0.02))
        if shape == "scherk":
            surf = scherk_surface(c=c, radius=radius * 1.05)
        elif shape == "holomorphic":
            surf = holomorphic_surface(c=c, radius=radius * 1.05)
        elif shape == "plane":
            surf = plane_surface(m, n, radius=radius * 1.05)
        else:
            raise GeneratorError(f"unknown minimal-graph surface {shape!r}")
        return gen_minimal_graph(surf, Q, radius, grid_n)
    raise GeneratorError(f"unknown generator kind {kind!r}")


# ---------------------------------------------------------------------------
# quadrature functionals


def mass_ratio(V: DiscreteVarifold, cyl: Cylinder):
    """Mass of the cylinder normalized by the flat m-disc volume."""
    mask = cyl.contains(V.points)
    return float(np.sum(V.mass_weights()[mask])) / (unit_ball_volume(V.m) * cyl.radius**V.m)


def ball_mass_ratio(V: DiscreteVarifold, center, r):
    mask = np.linalg.norm(V.points - np.asarray(center, dtype=float), axis=1) <= r + 1e-12
    return float(np.sum(V.mass_weights()[mask])) / (unit_ball_volume(V.m) * r**V.m)


def tilt_excess(V: DiscreteVarifold, cyl: Cylinder, plane: Plane):
    """Normalized squared tangent-plane deviation over a cylinder."""
    mask = cyl.contains(V.points)
    diffs = V.tangents[mask] - plane.projector
    vals = np.sum(diffs**2, axis=(1, 2))
    return float(np.sum(V.mass_weights()[mask] * vals)) / (
        unit_ball_volume(V.m) * cyl.radius**V.m
    )


def l2_height(V: DiscreteVarifold, surface: GraphSurface, cyl: Cylinder):
    """Scale-normalized squared distance to a surface over a cylinder.

    Returns (1 / (omega_m r^(m+2))) integral of d^2; atoms outside the
    projection tube surface as convergence errors naming the atom.
    """
    mask = cyl.contains(V.points)
    if not np.any(mask):
        return 0.0
    pts = V.points[mask]
    try:
        _, dist, _, _ = closest_point_batch(surface, pts)
    except Exception as exc:
        raise DomainError(f"atom projection failed inside the cylinder: {exc}")
    val = float(np.sum(V.mass_weights()[mask] * dist**2))
    return val / (unit_ball_volume(V.m) * cyl.radius ** (V.m + 2))


def excess_height(V, surface, cyl):
    """Square root of l2_height: the decay quantity."""
    return math.sqrt(max(l2_height(V, surface, cyl), 0.0))


# ---------------------------------------------------------------------------
# first variation


class VectorField:
    """Smooth ambient vector field with an analytic or differenced Jacobian."""

    def __init__(self, fn, jac=None, name="field"):
        self.fn = fn
        self._jac = jac
        self.name = name

    def __call__(self, points):
        return np.asarray(self.fn(points), dtype=float)

    def jacobian(self, points):
        if self._jac is not None:
            return np.asarray(self._jac(points), dtype=float)
        points = np.asarray(points, dtype=float)
        d = points.shape[1]
        out = np.zeros((len(points), d, d))
        h = 1e-6
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            out[:, :, j] = (self(points + e) - self(points - e)) / (2 * h)
        return out

    def sup_grad(self, points):
        J = self.jacobian(points)
        return float(np.max(np.linalg.norm(J.reshape(len(points), -1), axis=1)))


def bump_field(center, width, direction):
    """Compactly supported product bump times a constant direction.

    width may be a scalar or a per-axis array.
    """
    center = np.asarray(center, dtype=float)
    direction = np.asarray(direction, dtype=float)
    width = np.broadcast_to(np.asarray(width, dtype=float), center.shape).copy()

    def fn(pts):
        t = (pts - center) / width
        prof = np.prod(np.clip(1 - t**2, 0.0, None) ** 3, axis=-1)
        return prof[:, None] * direction

    def jac(pts):
        t = (pts - center) / width
        core = np.clip(1 - t**2, 0.0, None)
        prof = np.prod(core**3, axis=-1)
        d = pts.shape[1]
        grad = np.zeros_like(pts)
        for k in range(d):
            others = prof / np.where(core[:, k] > 0, core[:, k] ** 3, 1.0)
            gk = np.where(core[:, k] > 0, 3 * core[:, k] ** 2 * (-2 * t[:, k] / width[k]), 0.0)
            grad[:, k] = others * gk * (core[:, k] > 0)
        return np.einsum("a,pk->pak", direction, grad)

    return VectorField(fn, jac, name=f"bump@{np.round(center, 3)}")


def first_variation(V: DiscreteVarifold, X: VectorField):
    """delta V(X) = sum over atoms of weight * density * div_tangent X."""
    J = X.jacobian(V.points)
    div_t = np.einsum("pij,pij->p", V.tangents, J)
    return float(np.sum(V.mass_weights() * div_t))


def standard_test_fields(V: DiscreteVarifold, count=8):
    """Deterministic bump fields compactly supported inside the sampled patch.

    Bumps are centered on atoms from the inner part of the cloud so that the
    support (i) actually meets the data and (ii) dies out before the patch
    boundary; edge flux would otherwise masquerade as first variation.
    """
    d = V.ambient_dim
    lo = V.points.min(axis=0)
    hi = V.points.max(axis=0)
    span = hi - lo
    mid = 0.5 * (lo + hi)
    r_eff = float(np.max(np.linalg.norm(V.points - mid, axis=1)))
    # support corners must stay inside the (round) patch: |center| + width*sqrt(d) < r_eff
    width = np.where(span > 1e-9, 0.25 * r_eff / np.sqrt(d), 0.4 * max(r_eff, 1.0))
    inner = np.linalg.norm(V.points - mid, axis=1) <= 0.3 * r_eff
    cand = np.flatnonzero(inner)
    if len(cand) == 0:
        cand = np.arange(len(V.points))
    picks = cand[np.linspace(0, len(cand) - 1, min(4, len(cand))).astype(int)]
    fields = []
    i = 0
    for p in picks:
        c = V.points[p]
        for k in range(d):
            direction = np.zeros(d)
            direction[(i + k) % d] = 1.0
            fields.append(bump_field(c, width, direction))
            if len(fields) >= count:
                return fields
        i += 1
    return fields


def stationarity_audit(V: DiscreteVarifold, fields=None):
    """Max |delta V(X)| / sup|DX| over a standard family of test fields."""
    if fields is None:
        fields = standard_test_fields(V)
    worst = 0.0
    for X in fields:
        sg = X.sup_grad(V.points)
        if sg <= 0:
            continue
        worst = max(worst, abs(first_variation(V, X)) / sg)
    return worst


# ---------------------------------------------------------------------------
# inequality verifiers


def _surface_data_at_feet(surface, pts):
    feet, dist, u, _ = closest_point_batch(surface, pts)
    tangent, _, _ = surface.frames_chart(u)
    E = np.einsum("ab,pbm->pam", surface.pose_rot, tangent)
    P_M = E @ np.swapaxes(E, -1, -2)
    H = mean_curvature(surface, u)
    return feet, dist, P_M, H


def caccioppoli_check(
    V: DiscreteVarifold,
    surface: GraphSurface,
    r_in=0.5,
    r_out=1.0,
    audit_tol=5e-3,
    skip_audit=False,
):
    """Tilt-excess(inner) against height+curvature(outer), with measured ratio.

    Returns (lhs, rhs, c_meas, pointwise_ok); lhs and rhs are the two
    unnormalized integrals, c_meas their ratio (None when rhs ~ 0), and
    pointwise_ok reports the atomwise bound |T_z V - T_p M|^2 >= |D_V d|^2.
    """
    if not skip_audit:
        defect = stationarity_audit(V)
        if defect > audit_tol:
            raise HypothesisError("stationarity", defect, audit_tol)
    cyl_in = vertical_cylinder(V.m, V.n, r_in)
    cyl_out = vertical_cylinder(V.m, V.n, r_out)
    mask_in = cyl_in.contains(V.points)
    mask_out = cyl_out.contains(V.points)
    feet, dist, P_M, H = _surface_data_at_feet(surface, V.points[mask_out])
    w_out = V.mass_weights()[mask_out]
    rhs = float(np.sum(w_out * (dist**2 + dist * np.linalg.norm(H, axis=1))))
    in_of_out = mask_in[mask_out]
    tilt_sq = np.sum((V.tangents[mask_out] - P_M) ** 2, axis=(1, 2))
    lhs = float(np.sum(w_out[in_of_out] * tilt_sq[in_of_out]))
    # pointwise bound along the distance gradient
    pointwise_ok = True
    pos = dist > 1e-10
    if np.any(pos):
        ndir = (V.points[mask_out][pos] - feet[pos]) / dist[pos][:, None]
        dvd = np.einsum("pij,pj->pi", V.tangents[mask_out][pos], ndir)
        slack = tilt_sq[pos] - np.sum(dvd**2, axis=1)
        pointwise_ok = bool(np.min(slack) >= -1e-8)
    c_meas = lhs / rhs if rhs > 1e-14 else None
    return lhs, rhs, c_meas, pointwise_ok


def height_bound_check(
    V: DiscreteVarifold,
    surface: GraphSurface,
    r_in=0.5,
    r_out=1.0,
    audit_tol=5e-3,
    skip_audit=False,
):
    """Sup of d^2 (inner) against integral d^2 + mass * sup|H|^2 (outer)."""
    if not skip_audit:
        defect = stationarity_audit(V)
        if defect > audit_tol:
            raise HypothesisError("stationarity", defect, audit_tol)
    cyl_in = vertical_cylinder(V.m, V.n, r_in)
    cyl_out = vertical_cylinder(V.m, V.n, r_out)
    mask_in = cyl_in.contains(V.points)
    mask_out = cyl_out.contains(V.points)
    _, dist, _, _ = closest_point_batch(surface, V.points[mask_out])
    lhs = float(np.max((dist**2)[mask_in[mask_out]], initial=0.0))
    # sup of |H| over the surface patch inside the outer cylinder
    us = np.linspace(-0.95, 0.95, 33) * min(surface.chart_radius, r_out)
    mesh = np.meshgrid(*([us] * V.m), indexing="ij")
    uu = np.stack(mesh, axis=-1).reshape(-1, V.m)
    on_surf = surface.point(uu)
    uu = uu[cyl_out.contains(on_surf)]
    supH = float(np.max(np.linalg.norm(mean_curvature(surface, uu), axis=1), initial=0.0))
    mass = float(np.sum(V.mass_weights()[mask_out]))
    rhs = float(np.sum(V.mass_weights()[mask_out] * dist**2)) + mass * supH**2
    c_meas = lhs / rhs if rhs > 1e-14 else None
    return lhs, rhs, c_meas


def _single_linkage(points, gap):
    """Connected components of the gap-graph (single linkage clustering)."""
    N = len(points)
    parent = list(range(N))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    dists = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    for i in range(N):
        for j in range(i + 1, N):
            if dists[i, j] <= gap:
                ra, rb = find(i), find(j)
                if ra != rb:
                    parent[rb] = ra
    labels = np.array([find(i) for i in range(N)])
    _, labels = np.unique(labels, return_inverse=True)
    return labels


def sheet_band_check(V: DiscreteVarifold, cyl: Cylinder, Q, gap):
    """Cluster normal offsets over a cylinder into at most Q height bands.

    Returns (band centers, max band radius); raises when the clustering
    produces more than Q bands.  Offsets are thinned onto representatives of
    radius gap/4 before single linkage, so chains at spacing <= gap always
    merge and bands separated by > 2*gap never do.
    """
    mask = cyl.contains(V.points)
    if not np.any(mask):
        raise DomainError("empty cylinder in sheet band check")
    perp = np.eye(V.ambient_dim) - cyl.plane.projector
    heights = (V.points[mask] - cyl.center) @ perp.T
    reps = [heights[0]]
    rep_of = np.zeros(len(heights), dtype=int)
    for i, h in enumerate(heights):
        d = np.linalg.norm(np.asarray(reps) - h, axis=1)
        j = int(np.argmin(d))
        if d[j] <= 0.25 * gap:
            rep_of[i] = j
        else:
            reps.append(h)
            rep_of[i] = len(reps) - 1
    labels_rep = _single_linkage(np.asarray(reps), 1.5 * gap)
    labels = labels_rep[rep_of]
    n_bands = int(labels.max()) + 1
    if n_bands > Q:
        raise HypothesisError("sheet-band-count", n_bands, Q)
    centers, radii = [], []
    for b in range(n_bands):
        sel = heights[labels == b]
        c = sel.mean(axis=0)
        centers.append(c)
        radii.append(float(np.max(np.linalg.norm(sel - c, axis=1))))
    return np.array(centers), float(np.max(radii))
