"""Assembly of the block matrices and right-hand sides.

Vector dofs are blocked by component (dof = comp * n_vertices + vertex),
so vector mass and stiffness matrices are block diagonal copies of
scalar ones, and the fluid-structure coupling matrix couples equal
components only.

The coupling matrix between the multiplier space on the structure mesh
and the velocity space on the refined fluid mesh comes in two variants:
the exact one integrates on the subcells obtained by clipping each
mapped structure element against the fluid mesh (the integrand is
polynomial on every subcell, so the degree-2 rule is exact), while the
approximate one applies a single rule per structure element, with the
degree-2 edge-midpoint rule for the mass part and the one-point
centroid rule for the gradient part, locating the fluid element of
every quadrature node by structured lookup.

Right-hand sides are produced by inserting the analytic solution into
the left-hand side forms, so the discrete problem is consistent by
construction; smooth volume terms use the degree-6 rule.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geom_intersect import build_all_schemes
from .mesh import DomainViolationError
from .quadrature import rule_for_degree

__all__ = [
    "FormParams",
    "assemble_Af",
    "assemble_As",
    "assemble_B",
    "assemble_Cs",
    "assemble_Cf_exact",
    "assemble_Cf_approx",
    "assemble_rhs",
    "matrix_1norm_diff",
    "pressure_mean_row",
    "dump_matrix",
]

# Worker cap honored by the CLI threads flag; assembly currently runs on
# a single worker, which trivially respects any cap.
_worker_cap = 1


def set_worker_cap(n):
    global _worker_cap
    n = int(n)
    if n < 1:
        raise ValueError("worker cap must be at least 1")
    _worker_cap = n


@dataclass(frozen=True)
class FormParams:
    """Coefficients of the fluid and structure bilinear forms.

    a_f(u, v) = alpha (u, v) + nu (grad u, grad v) on the fluid box and
    a_s(X, Y) = beta (X, Y) + kappa (grad X, grad Y) on the structure;
    gamma scales the kinematic constraint and is fixed to one.
    """

    alpha: float = 0.0
    nu: float = 1.0
    beta: float = 0.0
    kappa: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("mass coefficients must be nonnegative")
        if self.nu <= 0 or self.kappa <= 0:
            raise ValueError("gradient coefficients must be positive")
        if self.gamma != 1.0:
            raise ValueError("gamma is fixed to one")


def _check_coupling(coupling):
    if coupling not in ("l2", "h1"):
        raise ValueError("coupling must be 'l2' or 'h1'")


def _basis_table(rule):
    q = rule.points
    return np.column_stack([1.0 - q[:, 0] - q[:, 1], q[:, 0], q[:, 1]])


def _csr(rows, cols, vals, shape):
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _scalar_mass(mesh):
    rule = rule_for_degree(2)
    basis = _basis_table(rule)
    m_unit = np.einsum("k,ki,kj->ij", rule.weights, basis, basis)
    tri = mesh.triangles
    vals = (mesh.areas[:, None, None] * m_unit).ravel()
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    nv = mesh.n_vertices
    return _csr(rows, cols, vals, (nv, nv))


def _scalar_stiffness(mesh):
    tri = mesh.triangles
    vals = (mesh.areas[:, None, None]
            * np.einsum("mid,mjd->mij", mesh.grads, mesh.grads)).ravel()
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    nv = mesh.n_vertices
    return _csr(rows, cols, vals, (nv, nv))


def _vector_block(A):
    return sp.block_diag((A, A), format="csr")


def assemble_Af(V, params):
    """Fluid matrix alpha * mass + nu * full-gradient stiffness on V."""
    A = params.nu * _scalar_stiffness(V.mesh)
    if params.alpha != 0.0:
        A = A + params.alpha * _scalar_mass(V.mesh)
    return _vector_block(A.tocsr())


def assemble_As(S, params):
    """Structure matrix beta * mass + kappa * stiffness on S.

    With beta = 0 the matrix alone is singular (constants); the full
    saddle system remains solvable through the coupling blocks.
    """
    A = params.kappa * _scalar_stiffness(S.mesh)
    if params.beta != 0.0:
        A = A + params.beta * _scalar_mass(S.mesh)
    return _vector_block(A.tocsr())


def assemble_B(V, Q):
    """Divergence matrix, entry (q_i, v_j) = int div(phi_j) psi_i.

    Assembled over refined elements with the centroid rule, which is
    exact because the integrand is linear (constant divergence times a
    linear pressure function).  Q must live on the parent mesh of V.
    """
    mesh_v = V.mesh
    mesh_q = Q.mesh
    if (mesh_v.n_cells_per_side != 2 * mesh_q.n_cells_per_side
            or mesh_v.domain != mesh_q.domain
            or mesh_v.n_triangles != 4 * mesh_q.n_triangles):
        raise ValueError("velocity mesh is not the midpoint refinement "
                         "of the pressure mesh")
    ntv = mesh_v.n_triangles
    parent = np.arange(ntv) // 4
    cent = mesh_v.centroids
    # Pressure basis values at child centroids, via the parent P1 data.
    psi = (1.0 / 3.0
           + np.einsum("mid,md->mi", mesh_q.grads[parent],
                       cent - mesh_q.centroids[parent]))
    vals = np.einsum("m,mi,mjc->mijc", mesh_v.areas, psi, mesh_v.grads)
    rows = np.broadcast_to(mesh_q.triangles[parent][:, :, None, None],
                           vals.shape)
    nvv = V.n_vertices
    cols = np.broadcast_to(
        mesh_v.triangles[:, None, :, None]
        + nvv * np.arange(2)[None, None, None, :], vals.shape)
    return _csr(rows.ravel(), cols.ravel(), vals.ravel(),
                (Q.n_dofs, V.n_dofs))


def assemble_Cs(L, S, coupling):
    """Structure coupling matrix: vector mass (l2) or mass + stiffness (h1)."""
    _check_coupling(coupling)
    if L.mesh is not S.mesh and (L.mesh.n_vertices != S.mesh.n_vertices
                                 or L.mesh.domain != S.mesh.domain):
        raise ValueError("multiplier and structure spaces must share a mesh")
    A = _scalar_mass(S.mesh)
    if coupling == "h1":
        A = A + _scalar_stiffness(S.mesh)
    return _vector_block(A.tocsr())


def _xbar_parts(xbar, n_elements):
    """Per-element matrices (n, 2, 2) and offsets (n, 2) from one map or a list."""
    if hasattr(xbar, "apply"):
        mats = np.broadcast_to(xbar.matrix, (n_elements, 2, 2))
        offs = np.broadcast_to(xbar.offset, (n_elements, 2))
        return mats, offs, [xbar] * n_elements
    maps = list(xbar)
    if len(maps) != n_elements:
        raise ValueError("one placement map per structure element required")
    mats = np.stack([m.matrix for m in maps])
    offs = np.stack([m.offset for m in maps])
    return mats, offs, maps


def _fluid_basis_at(mesh_f, owners, pts):
    """P1 basis values of the owning fluid triangles at physical points.

    owners (..., ) indexes triangles, pts (..., 2); returns (..., 3).
    """
    g = mesh_f.grads[owners]
    d = pts - mesh_f.centroids[owners]
    return 1.0 / 3.0 + np.einsum("...id,...d->...i", g, d)


def assemble_Cf_exact(L, V, xbar, coupling="l2", schemes=None):
    """Coupling matrix integrated exactly on mesh-intersection subcells.

    Rows are multiplier dofs, columns velocity dofs; only equal
    components couple.  Precomputed composite schemes (one per structure
    element) can be passed to amortize the clipping cost.
    """
    _check_coupling(coupling)
    mesh_b = L.mesh
    mesh_f = V.mesh
    rule = rule_for_degree(2)
    basis = _basis_table(rule)
    w = rule.weights
    mats, _, maps = _xbar_parts(xbar, mesh_b.n_triangles)
    if schemes is None:
        schemes = build_all_schemes(mesh_b, xbar, mesh_f, rule)

    tri_b = mesh_b.triangles
    tri_f = mesh_f.triangles
    rows_l = []
    cols_l = []
    vals_l = []
    for t in range(mesh_b.n_triangles):
        sch = schemes[t]
        m = len(sch)
        if m == 0:
            continue
        sq = np.einsum("ki,mid->mkd", basis, sch.subcells)
        mu = (1.0 / 3.0
              + np.einsum("id,mkd->mki", mesh_b.grads[t],
                          sq - mesh_b.centroids[t]))
        xq = maps[t].apply(sq)
        vf = _fluid_basis_at(mesh_f, sch.owners[:, None], xq)
        loc = np.einsum("m,k,mki,mkj->mij", sch.s_areas, w, mu, vf)
        if coupling == "h1":
            gv = np.einsum("ed,mje->mjd", mats[t], mesh_f.grads[sch.owners])
            loc = loc + np.einsum("m,id,mjd->mij", sch.s_areas,
                                  mesh_b.grads[t], gv)
        rows_l.append(np.broadcast_to(tri_b[t][None, :, None], loc.shape).ravel())
        cols_l.append(np.broadcast_to(tri_f[sch.owners][:, None, :], loc.shape).ravel())
        vals_l.append(loc.ravel())

    if rows_l:
        r = np.concatenate(rows_l)
        c = np.concatenate(cols_l)
        v = np.concatenate(vals_l)
    else:
        r = c = v = np.empty(0)
    nvb = L.n_vertices
    nvf = V.n_vertices
    rows = np.concatenate([r, r + nvb])
    cols = np.concatenate([c, c + nvf])
    vals = np.concatenate([v, v])
    return _csr(rows, cols, vals, (L.n_dofs, V.n_dofs))


def assemble_Cf_approx(L, V, xbar, coupling="l2"):
    """Coupling matrix with a single quadrature rule per structure element.

    Mass part: degree-2 edge-midpoint rule; gradient part (h1 only):
    one-point centroid rule.  Each quadrature node is located in the
    fluid mesh independently.
    """
    _check_coupling(coupling)
    mesh_b = L.mesh
    mesh_f = V.mesh
    rule = rule_for_degree(2)
    basis = _basis_table(rule)
    w = rule.weights
    ntb = mesh_b.n_triangles
    mats, offs, _ = _xbar_parts(xbar, ntb)
    tri_b = mesh_b.triangles
    tri_f = mesh_f.triangles

    pverts = mesh_b.vertices[tri_b]
    sq = np.einsum("ki,mid->mkd", basis, pverts)
    xq = np.einsum("med,mkd->mke", mats, sq) + offs[:, None, :]
    owners = mesh_f.locate_points(xq.reshape(-1, 2)).reshape(ntb, len(rule))
    if np.any(owners < 0):
        raise DomainViolationError("mapped quadrature node leaves the fluid domain")
    vf = _fluid_basis_at(mesh_f, owners, xq)
    vals = np.einsum("m,k,ki,mkj->mkij", mesh_b.areas, w, basis, vf)
    rows = np.broadcast_to(tri_b[:, None, :, None], vals.shape)
    cols = np.broadcast_to(tri_f[owners][:, :, None, :], vals.shape)
    r = rows.ravel()
    c = cols.ravel()
    v = vals.ravel()

    if coupling == "h1":
        sc = mesh_b.centroids
        xc = np.einsum("med,md->me", mats, sc) + offs
        ownc = mesh_f.locate_points(xc)
        if np.any(ownc < 0):
            raise DomainViolationError("mapped centroid leaves the fluid domain")
        gv = np.einsum("med,mje->mjd", mats, mesh_f.grads[ownc])
        locg = np.einsum("m,mid,mjd->mij", mesh_b.areas, mesh_b.grads, gv)
        rg = np.broadcast_to(tri_b[:, :, None], locg.shape).ravel()
        cg = np.broadcast_to(tri_f[ownc][:, None, :], locg.shape).ravel()
        r = np.concatenate([r, rg])
        c = np.concatenate([c, cg])
        v = np.concatenate([v, locg.ravel()])

    nvb = L.n_vertices
    nvf = V.n_vertices
    rows = np.concatenate([r, r + nvb])
    cols = np.concatenate([c, c + nvf])
    vals = np.concatenate([v, v])
    return _csr(rows, cols, vals, (L.n_dofs, V.n_dofs))


def matrix_1norm_diff(Aex, Aap):
    """Matrix 1-norm (max column sum of absolute values) of Aex - Aap."""
    if Aex.shape != Aap.shape:
        raise ValueError("matrix dimensions differ")
    d = abs(Aex - Aap)
    col = np.asarray(d.sum(axis=0)).ravel()
    return float(col.max()) if col.size else 0.0


def pressure_mean_row(Q):
    """Vector m with m_i = int psi_i, the pressure mean constraint row."""
    mesh = Q.mesh
    m = np.zeros(Q.n_dofs)
    np.add.at(m, mesh.triangles, (mesh.areas / 3.0)[:, None])
    return m


# -- right-hand sides ----------------------------------------------------


def _volume_rhs_fluid(V, exact, params, rule):
    """alpha (u, phi) + nu (grad u, grad phi) - (p, div phi) on the fluid mesh."""
    mesh = V.mesh
    basis = _basis_table(rule)
    pts = np.einsum("ki,mid->mkd", basis, mesh.vertices[mesh.triangles])
    w = rule.weights
    gu = np.asarray(exact.grad_u(pts))
    pv = np.asarray(exact.p(pts))
    contrib = params.nu * np.einsum("m,k,mkcd,mid->mic",
                                    mesh.areas, w, gu, mesh.grads)
    if params.alpha != 0.0:
        uv = np.asarray(exact.u(pts))
        contrib += params.alpha * np.einsum("m,k,mkc,ki->mic",
                                            mesh.areas, w, uv, basis)
    contrib -= np.einsum("m,k,mk,mic->mic", mesh.areas, w, pv, mesh.grads)
    F = np.zeros(V.n_dofs)
    nv = V.n_vertices
    for c in range(2):
        np.add.at(F, c * nv + mesh.triangles, contrib[..., c])
    return F


def _coupling_rhs_exact(V, L, exact, xbar, coupling, schemes):
    """c(lambda, phi o xbar) on composite subcells with the degree-6 rule."""
    mesh_b = L.mesh
    mesh_f = V.mesh
    rule = rule_for_degree(6)
    basis = _basis_table(rule)
    w = rule.weights
    mats, _, maps = _xbar_parts(xbar, mesh_b.n_triangles)
    F = np.zeros(V.n_dofs)
    nv = V.n_vertices
    tri_f = mesh_f.triangles
    for t in range(mesh_b.n_triangles):
        sch = schemes[t]
        if len(sch) == 0:
            continue
        sq = np.einsum("ki,mid->mkd", basis, sch.subcells)
        xq = maps[t].apply(sq)
        vf = _fluid_basis_at(mesh_f, sch.owners[:, None], xq)
        lv = np.asarray(exact.lam(sq))
        loc = np.einsum("m,k,mkc,mkj->mjc", sch.s_areas, w, lv, vf)
        if coupling == "h1":
            gl = np.asarray(exact.grad_lam(sq))
            gv = np.einsum("ed,mje->mjd", mats[t], mesh_f.grads[sch.owners])
            loc = loc + np.einsum("m,k,mkcd,mjd->mjc",
                                  sch.s_areas, w, gl, gv)
        for c in range(2):
            np.add.at(F, c * nv + tri_f[sch.owners], loc[..., c])
    return F


def _coupling_rhs_approx(V, L, exact, xbar, coupling):
    """c(lambda, phi o xbar) with the single-element rules."""
    mesh_b = L.mesh
    mesh_f = V.mesh
    rule = rule_for_degree(2)
    basis = _basis_table(rule)
    w = rule.weights
    ntb = mesh_b.n_triangles
    mats, offs, _ = _xbar_parts(xbar, ntb)
    tri_f = mesh_f.triangles
    F = np.zeros(V.n_dofs)
    nv = V.n_vertices

    sq = np.einsum("ki,mid->mkd", basis, mesh_b.vertices[mesh_b.triangles])
    xq = np.einsum("med,mkd->mke", mats, sq) + offs[:, None, :]
    owners = mesh_f.locate_points(xq.reshape(-1, 2)).reshape(ntb, len(rule))
    if np.any(owners < 0):
        raise DomainViolationError("mapped quadrature node leaves the fluid domain")
    vf = _fluid_basis_at(mesh_f, owners, xq)
    lv = np.asarray(exact.lam(sq))
    vals = np.einsum("m,k,mkc,mkj->mkjc", mesh_b.areas, w, lv, vf)
    for c in range(2):
        np.add.at(F, c * nv + tri_f[owners], vals[..., c])

    if coupling == "h1":
        sc = mesh_b.centroids
        xc = np.einsum("med,md->me", mats, sc) + offs
        ownc = mesh_f.locate_points(xc)
        if np.any(ownc < 0):
            raise DomainViolationError("mapped centroid leaves the fluid domain")
        gl = np.asarray(exact.grad_lam(sc))
        gv = np.einsum("med,mje->mjd", mats, mesh_f.grads[ownc])
        locg = np.einsum("m,mcd,mjd->mjc", mesh_b.areas, gl, gv)
        for c in range(2):
            np.add.at(F, c * nv + tri_f[ownc], locg[..., c])
    return F


def _structure_rhs(S, exact, params, coupling):
    """a_s(X, Y) - c(lambda, Y) on the structure mesh with the degree-6 rule."""
    mesh = S.mesh
    rule = rule_for_degree(6)
    basis = _basis_table(rule)
    pts = np.einsum("ki,mid->mkd", basis, mesh.vertices[mesh.triangles])
    w = rule.weights
    gx = np.asarray(exact.grad_X(pts))
    lv = np.asarray(exact.lam(pts))
    contrib = params.kappa * np.einsum("m,k,mkcd,mid->mic",
                                       mesh.areas, w, gx, mesh.grads)
    if params.beta != 0.0:
        xv = np.asarray(exact.X(pts))
        contrib += params.beta * np.einsum("m,k,mkc,ki->mic",
                                           mesh.areas, w, xv, basis)
    contrib -= np.einsum("m,k,mkc,ki->mic", mesh.areas, w, lv, basis)
    if coupling == "h1":
        gl = np.asarray(exact.grad_lam(pts))
        contrib -= np.einsum("m,k,mkcd,mid->mic", mesh.areas, w, gl, mesh.grads)
    G = np.zeros(S.n_dofs)
    nv = S.n_vertices
    for c in range(2):
        np.add.at(G, c * nv + mesh.triangles, contrib[..., c])
    return G


def _constraint_rhs(L, exact, coupling, mode):
    """c(mu, d) with d = u(xbar(s)) - X(s), which is smooth on the structure.

    Exact mode integrates with the degree-6 rule; approx mode mirrors
    the single-element coupling rules (degree-2 mass part, centroid
    gradient part).
    """
    mesh = L.mesh
    D = np.zeros(L.n_dofs)
    nv = L.n_vertices
    if mode == "exact":
        rule = rule_for_degree(6)
        basis = _basis_table(rule)
        pts = np.einsum("ki,mid->mkd", basis, mesh.vertices[mesh.triangles])
        w = rule.weights
        dv = np.asarray(exact.d(pts))
        contrib = np.einsum("m,k,mkc,ki->mic", mesh.areas, w, dv, basis)
        if coupling == "h1":
            gd = np.asarray(exact.grad_d(pts))
            contrib += np.einsum("m,k,mkcd,mid->mic",
                                 mesh.areas, w, gd, mesh.grads)
        for c in range(2):
            np.add.at(D, c * nv + mesh.triangles, contrib[..., c])
        return D
    rule = rule_for_degree(2)
    basis = _basis_table(rule)
    pts = np.einsum("ki,mid->mkd", basis, mesh.vertices[mesh.triangles])
    dv = np.asarray(exact.d(pts))
    contrib = np.einsum("m,k,mkc,ki->mic", mesh.areas, rule.weights, dv, basis)
    if coupling == "h1":
        gd = np.asarray(exact.grad_d(mesh.centroids))
        contrib += np.einsum("m,mcd,mid->mic", mesh.areas, gd, mesh.grads)
    for c in range(2):
        np.add.at(D, c * nv + mesh.triangles, contrib[..., c])
    return D


def assemble_rhs(V, Q, S, L, exact, xbar, coupling, mode, params=None,
                 schemes=None):
    """Right-hand side vectors (F, G, D) for the block system.

    F(v) = a_f(u, v) - (div v, p) + c(lambda, v o xbar),
    G(Y) = a_s(X, Y) - c(lambda, Y),
    D(mu) = c(mu, d) with d = u(xbar) - X.

    mode selects how the velocity coupling term (and the constraint
    data) are integrated: "exact" uses the composite subcell scheme,
    "approx" the single-element rules.
    """
    _check_coupling(coupling)
    if mode not in ("exact", "approx"):
        raise ValueError("mode must be 'exact' or 'approx'")
    params = params or FormParams()
    F = _volume_rhs_fluid(V, exact, params, rule_for_degree(6))
    if mode == "exact":
        if schemes is None:
            schemes = build_all_schemes(L.mesh, xbar, V.mesh,
                                        rule_for_degree(2))
        F += _coupling_rhs_exact(V, L, exact, xbar, coupling, schemes)
    else:
        F += _coupling_rhs_approx(V, L, exact, xbar, coupling)
    G = _structure_rhs(S, exact, params, coupling)
    D = _constraint_rhs(L, exact, coupling, mode)
    return F, G, D


def dump_matrix(A, path):
    """Coordinate text dump ``row col value``, deterministic order."""
    coo = A.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i in order:
            fh.write("%d %d %.17g\n" % (coo.row[i], coo.col[i], coo.data[i]))
