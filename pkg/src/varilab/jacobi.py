"""The stability operator on normal sections: application, Dirichlet and source solves.

The operator acts as L f = (Lap_M f)^perp + 2 II_f : II.  Solves assemble a
sparse system over normal-frame coefficients at interior nodes with second
order central stencils; coefficients (metric, frame derivatives, II) come
from the cached SectionSpace geometry.
"""

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DomainError
from .sections import NormalSection, SectionSpace, TensorGrid, d1, section_dirderiv

SOLVE_RESIDUAL_TOL = 1e-10


def _as_space(space_or_surface, section=None, grid=None):
    if isinstance(space_or_surface, SectionSpace):
        return space_or_surface
    if section is not None:
        return section.space
    return SectionSpace(space_or_surface, grid)


def apply_jacobi(space_or_surface, section: NormalSection):
    """Apply the stability operator to a section, returning a new section.

    Matrix-free: differentiates the ambient values directly (grid stencils, or
    small-step differencing when the section carries a callable) and projects
    the result onto the normal frame.  Values on non-interior nodes are zero.
    """
    space = _as_space(space_or_surface, section)
    grid = space.grid
    if grid.n_axis < 8:
        raise DomainError("grid too coarse for the stability operator")
    D1 = section_dirderiv(space, section, order=1)  # shape + (m, d)
    D2 = section_dirderiv(space, section, order=2)  # shape + (m, m, d)
    lap = np.einsum("...kl,...kld->...d", space.metric_inv, D2) + np.einsum(
        "...k,...kd->...d", space.b_coeff, D1
    )
    coeffs = np.einsum("...d,...dc->...c", lap, space.normal)
    ii_f = np.einsum("...abc,...c->...ab", space.II, section.coeffs)
    coeffs = coeffs + 2.0 * np.einsum("...ab,...abc->...c", ii_f, space.II)
    interior = grid.interior_mask(1)
    coeffs[~interior] = 0.0
    return NormalSection(space, coeffs=coeffs)


def weak_product(space: SectionSpace, f: NormalSection, g: NormalSection):
    """Quadrature of the bilinear form  integral( Df:Dg - 2 II_f : II_g )."""
    Df = section_dirderiv(space, f, order=1)
    Dg = section_dirderiv(space, g, order=1)
    dots = np.einsum("...kl,...kd,...ld->...", space.metric_inv, Df, Dg)
    ii_f = np.einsum("...abc,...c->...ab", space.II, f.coeffs)
    ii_g = np.einsum("...abc,...c->...ab", space.II, g.coeffs)
    dots = dots - 2.0 * np.einsum("...ab,...ab->...", ii_f, ii_g)
    return space.integrate(dots)


class SectionOperator:
    """Assembled sparse stability operator on interior-node normal coefficients.

    Unknowns are the n normal coefficients at every node of the margin-deep
    interior; all other nodes are data.  ``matrix`` acts on unknowns,
    ``data_matrix`` maps full-grid coefficient arrays to their contribution to
    the interior rows.
    """

    def __init__(self, space: SectionSpace, margin=1):
        self.space = space
        self.margin = int(margin)
        grid = space.grid
        m, n = space.m, space.n
        h = grid.h
        interior = grid.interior_mask(self.margin)
        self.interior = interior
        n_int = int(np.count_nonzero(interior))
        self.n_unknowns = n_int * n
        idx = -np.ones(grid.shape, dtype=int)
        idx[interior] = np.arange(n_int)
        self.index_map = idx
        flat_idx = np.arange(grid.n_nodes).reshape(grid.shape)

        # frame-coupling coefficients
        #   F[..., i, a, b] = 2 sum_j Ginv[i, j] (d_j nu_a . nu_b)
        F = 2.0 * np.einsum(
            "...ij,...jda,...db->...iab", space.metric_inv, space.dnu, space.normal
        )
        Z = np.einsum("...da,...db->...ab", space.lap_nu, space.normal) + 2.0 * space.ii_gram

        int_multi = np.argwhere(interior)
        unknown_rows = np.arange(n_int)
        Ginv_i = space.metric_inv[interior]
        b_i = space.b_coeff[interior]
        F_i = F[interior]
        Z_i = Z[interior]
        eye_n = np.eye(n)

        rows, cols_unknown, vals_unknown = [], [], []
        cols_data, vals_data = [], []
        rows_data = []

        def add_block(shift, coef):
            """coef: (n_int, n, n); coef[:, a, b] couples neighbor coeff a to row comp b."""
            nb = int_multi + np.asarray(shift)
            nb_flat = flat_idx[tuple(nb.T)]
            nb_unknown = idx.reshape(-1)[nb_flat]
            is_unk = nb_unknown >= 0
            for a in range(n):
                for b in range(n):
                    c = coef[:, a, b]
                    nz = c != 0.0
                    take = nz & is_unk
                    if np.any(take):
                        rows.append(unknown_rows[take] * n + b)
                        cols_unknown.append(nb_unknown[take] * n + a)
                        vals_unknown.append(c[take])
                    take = nz & ~is_unk
                    if np.any(take):
                        rows_data.append(unknown_rows[take] * n + b)
                        cols_data.append(nb_flat[take] * n + a)
                        vals_data.append(c[take])

        center = np.zeros((n_int, n, n))
        for k in range(m):
            center += (-2.0 * Ginv_i[:, k, k] / h**2)[:, None, None] * eye_n
            for sign in (+1, -1):
                shift = [0] * m
                shift[k] = sign
                coef = (Ginv_i[:, k, k] / h**2 + sign * b_i[:, k] / (2 * h))[
                    :, None, None
                ] * eye_n
                coef = coef + sign / (2 * h) * F_i[:, k]
                add_block(shift, coef)
        for k in range(m):
            for l in range(k + 1, m):
                for sk in (+1, -1):
                    for sl in (+1, -1):
                        shift = [0] * m
                        shift[k] = sk
                        shift[l] = sl
                        coef = (sk * sl * 2.0 * Ginv_i[:, k, l] / (4 * h**2))[
                            :, None, None
                        ] * eye_n
                        add_block(shift, coef)
        center += Z_i
        add_block([0] * m, center)

        self.matrix = sparse.coo_matrix(
            (np.concatenate(vals_unknown), (np.concatenate(rows), np.concatenate(cols_unknown))),
            shape=(self.n_unknowns, self.n_unknowns),
        ).tocsc()
        if rows_data:
            self.data_matrix = sparse.coo_matrix(
                (np.concatenate(vals_data), (np.concatenate(rows_data), np.concatenate(cols_data))),
                shape=(self.n_unknowns, grid.n_nodes * n),
            ).tocsr()
        else:
            self.data_matrix = sparse.csr_matrix((self.n_unknowns, grid.n_nodes * n))
        self._lu = None

    def apply_full(self, coeffs):
        """Interior rows of L applied to a full-grid coefficient array."""
        c = np.asarray(coeffs, dtype=float)
        c_int = c.reshape(-1, self.space.n)[self.interior.reshape(-1)].reshape(-1)
        return self.matrix @ c_int + self.data_matrix @ c.reshape(-1)

    def solve(self, rhs_int, data_coeffs):
        """Solve L c = rhs on the interior with given data-node coefficients."""
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:
                raise ConvergenceError(f"singular stability system: {exc}")
        b = np.asarray(rhs_int, dtype=float).reshape(-1) - self.data_matrix @ np.asarray(
            data_coeffs, dtype=float
        ).reshape(-1)
        x = self._lu.solve(b)
        resid = float(np.max(np.abs(self.matrix @ x - b))) if len(b) else 0.0
        return x, resid

    def scatter(self, x, data_coeffs):
        """Combine interior solution and data coefficients into a full-grid array."""
        space = self.space
        out = np.array(data_coeffs, dtype=float).reshape(space.grid.shape + (space.n,))
        out[self.interior] = x.reshape(-1, space.n)
        return out


def _coeff_data_from_boundary(space, boundary_data, margin):
    """Full-grid coefficient array carrying boundary data on non-interior nodes."""
    grid = space.grid
    data = np.zeros(grid.shape + (space.n,))
    mask = grid.boundary_mask(margin)
    us = grid.nodes[mask]
    if callable(boundary_data):
        vals = np.asarray(boundary_data(us), dtype=float)
        if vals.shape[-1] == space.m + space.n:
            coeffs = np.einsum("pd,pdc->pc", vals, space.normal[mask])
        elif vals.shape[-1] == space.n:
            coeffs = vals
        else:
            raise DomainError("boundary data must be ambient vectors or normal coefficients")
    else:
        vals = np.asarray(boundary_data, dtype=float)
        if vals.shape == grid.shape + (space.n,):
            coeffs = vals[mask]
        elif vals.shape == grid.shape + (space.m + space.n,):
            coeffs = np.einsum("pd,pdc->pc", vals[mask], space.normal[mask])
        else:
            raise DomainError("boundary data array shape mismatch")
    data[mask] = coeffs
    return data


def dirichlet_solve(space_or_surface, boundary_data, grid=None, margin=1):
    """Kernel section with given boundary values: L w = 0 inside, w = v on the rim.

    Returns a NormalSection whose ``info`` carries the interior residual and
    the measured sup-norm amplification sup|w| / sup|v|.
    """
    space = _as_space(space_or_surface, grid=grid)
    op = SectionOperator(space, margin=margin)
    data = _coeff_data_from_boundary(space, boundary_data, margin)
    x, resid = op.solve(np.zeros(op.n_unknowns), data)
    if resid > SOLVE_RESIDUAL_TOL:
        raise ConvergenceError("Dirichlet solve residual too large", residual=resid)
    coeffs = op.scatter(x, data)
    out = NormalSection(space, coeffs=coeffs)
    sup_b = float(np.max(np.linalg.norm(data[space.grid.boundary_mask(margin)], axis=-1)))
    sup_i = out.sup(space.grid.interior_mask(margin))
    out.info = {
        "residual": resid,
        "sup_boundary": sup_b,
        "sup_interior": sup_i,
        "max_principle_ratio": sup_i / sup_b if sup_b > 0 else 0.0,
    }
    return out


def source_solve(space_or_surface, source, grid=None, margin=1):
    """Solve L u = f with zero boundary values; f is a NormalSection or callable."""
    space = _as_space(space_or_surface, grid=grid)
    if callable(source):
        from .sections import section_from_callable

        source = section_from_callable(space, source)
    op = SectionOperator(space, margin=margin)
    rhs = source.coeffs[op.interior].reshape(-1)
    data = np.zeros(space.grid.shape + (space.n,))
    x, resid = op.solve(rhs, data)
    if resid > SOLVE_RESIDUAL_TOL:
        raise ConvergenceError("source solve residual too large", residual=resid)
    out = NormalSection(space, coeffs=op.scatter(x, data))
    grad = out.gradient()
    c1 = max(
        out.sup(),
        float(np.max(np.linalg.norm(grad[space.grid.interior_mask(margin)], axis=(-2, -1)))),
    )
    sup_f = source.sup()
    out.info = {
        "residual": resid,
        "c1_norm": c1,
        "c1_over_sup_source": c1 / sup_f if sup_f > 0 else 0.0,
    }
    return out


def _bump_family(grid: TensorGrid):
    """Deterministic nonnegative compactly supported test functions on the grid."""
    m = grid.m
    r = grid.radius
    fams = []
    centers = [np.zeros(m)]
    for k in range(m):
        for s in (-0.35, 0.35):
            c = np.zeros(m)
            c[k] = s * r
            centers.append(c)
    for width in (0.55 * r, 0.3 * r):
        for c in centers:
            t = (grid.nodes - c) / width
            prof = np.prod(np.clip(1.0 - t**2, 0.0, None) ** 3, axis=-1)
            if np.any(prof > 0):
                fams.append(prof)
    return fams


def subsolution_check(space_or_surface, section: NormalSection, coeff=None, tol=1e-8):
    """Weak nonnegativity of Lap|w|^2 + c |w|^2 against nonnegative test bumps.

    coeff defaults to 4 sup|II|^2, the constant produced by testing the kernel
    equation with zeta * w.  Returns (ok, worst_slack).
    """
    space = _as_space(space_or_surface, section)
    grid = space.grid
    if coeff is None:
        coeff = 4.0 * float(np.max(np.sum(space.II**2, axis=(-3, -2, -1))))
    psi = np.sum(section.values**2, axis=-1)
    dpsi = np.stack([d1(grid, psi, ax) for ax in range(grid.m)], axis=-1)
    worst = np.inf
    for zeta in _bump_family(grid):
        dzeta = np.stack([d1(grid, zeta, ax) for ax in range(grid.m)], axis=-1)
        flux = np.einsum("...kl,...k,...l->...", space.metric_inv, dpsi, dzeta)
        val = space.integrate(-flux + coeff * psi * zeta)
        scale = max(1.0, float(np.max(psi)))
        worst = min(worst, val / scale)
    return worst >= -tol, float(worst)
