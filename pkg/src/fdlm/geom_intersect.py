"""Triangle-triangle intersection and composite quadrature schemes.

The coupling matrix between the structure multiplier space and the
fluid velocity space has piecewise-polynomial integrands whose pieces
follow the fluid mesh.  Integrating them exactly requires clipping each
mapped structure element against the fluid triangles it overlaps,
triangulating the resulting convex polygons, and pulling the pieces
back to structure coordinates where the multiplier basis is native.

Clipping runs in physical coordinates with Sutherland-Hodgman
half-plane clipping; tolerance-based predicates are sufficient because
acceptance of the downstream studies is rate-based, not bit-exact.
"""

import numpy as np

from .mesh import DomainViolationError
from .quadrature import rule_for_degree

__all__ = [
    "clip_triangle",
    "polygon_area",
    "fan_triangulate",
    "CompositeQuadScheme",
    "build_composite_scheme",
    "build_all_schemes",
]

_SLIVER_REL = 1e-14
_COLLINEAR_REL = 1e-12


def polygon_area(pts):
    """Shoelace area of a polygon given as an (m, 2) array (CCW positive)."""
    pts = np.asarray(pts, dtype=float)
    if pts.shape[0] < 3:
        return 0.0
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_raw(subject, clip, diam):
    """Sutherland-Hodgman core on lists of (x, y) tuples; clip is CCW."""
    out = subject
    for k in range(3):
        ax, ay = clip[k]
        bx, by = clip[(k + 1) % 3]
        ex, ey = bx - ax, by - ay
        elen = (ex * ex + ey * ey) ** 0.5
        tol = -_COLLINEAR_REL * diam * elen
        nxt = []
        m = len(out)
        if m == 0:
            return nxt
        px, py = out[-1]
        dp = ex * (py - ay) - ey * (px - ax)
        for i in range(m):
            cx, cy = out[i]
            dc = ex * (cy - ay) - ey * (cx - ax)
            if dc >= tol:
                if dp < tol:
                    t = dp / (dp - dc)
                    nxt.append((px + t * (cx - px), py + t * (cy - py)))
                nxt.append((cx, cy))
            elif dp >= tol:
                t = dp / (dp - dc)
                nxt.append((px + t * (cx - px), py + t * (cy - py)))
            px, py, dp = cx, cy, dc
        out = nxt
    return out


def _cleanup(pts, diam):
    """Drop duplicate and collinear vertices (tolerance 1e-12 * diameter)."""
    tol = _COLLINEAR_REL * diam
    m = len(pts)
    if m < 3:
        return []
    keep = []
    for i in range(m):
        px, py = pts[i]
        if keep:
            qx, qy = keep[-1]
            if abs(px - qx) <= tol and abs(py - qy) <= tol:
                continue
        keep.append((px, py))
    if len(keep) >= 2:
        qx, qy = keep[-1]
        px, py = keep[0]
        if abs(px - qx) <= tol and abs(py - qy) <= tol:
            keep.pop()
    m = len(keep)
    if m < 3:
        return []
    out = []
    for i in range(m):
        ax, ay = keep[i - 1]
        bx, by = keep[i]
        cx, cy = keep[(i + 1) % m]
        ux, uy = cx - ax, cy - ay
        ulen = (ux * ux + uy * uy) ** 0.5
        if abs(ux * (by - ay) - uy * (bx - ax)) > tol * ulen:
            out.append((bx, by))
    return out if len(out) >= 3 else []


def _tri_diam(t):
    d2 = 0.0
    for i in range(3):
        for j in range(i + 1, 3):
            dx = t[i][0] - t[j][0]
            dy = t[i][1] - t[j][1]
            d2 = max(d2, dx * dx + dy * dy)
    return d2 ** 0.5


def clip_triangle(subject, clip):
    """Intersection polygon of two triangles, as an (m, 2) CCW array.

    Returns an empty (0, 2) array when the triangles are disjoint.
    Degenerate (zero-area) inputs raise ValueError.
    """
    s = np.asarray(subject, dtype=float).reshape(3, 2)
    c = np.asarray(clip, dtype=float).reshape(3, 2)
    s_list = [tuple(p) for p in s]
    c_list = [tuple(p) for p in c]
    sa = polygon_area(s)
    ca = polygon_area(c)
    if sa == 0.0 or ca == 0.0:
        raise ValueError("degenerate input triangle")
    if sa < 0:
        s_list.reverse()
    if ca < 0:
        c_list.reverse()
    diam = max(_tri_diam(s_list), _tri_diam(c_list))
    poly = _cleanup(_clip_raw(s_list, c_list, diam), diam)
    return np.asarray(poly, dtype=float).reshape(-1, 2)


def fan_triangulate(poly):
    """Fan triangulation from vertex 0; (k, 3, 2) array, empty for < 3 vertices."""
    poly = np.asarray(poly, dtype=float).reshape(-1, 2)
    m = poly.shape[0]
    if m < 3:
        return np.empty((0, 3, 2))
    tris = np.empty((m - 2, 3, 2))
    tris[:, 0] = poly[0]
    tris[:, 1] = poly[1:m - 1]
    tris[:, 2] = poly[2:m]
    return tris


class CompositeQuadScheme:
    """Subcell decomposition of one structure element against the fluid mesh.

    Attributes
    ----------
    subcells : (m, 3, 2) array of subcell triangles in structure coordinates
    owners : (m,) int array, owning fluid triangle per subcell
    rule : QuadratureRule applied on each subcell
    s_areas : (m,) subcell areas in structure coordinates
    """

    __slots__ = ("subcells", "owners", "rule", "s_areas")

    def __init__(self, subcells, owners, rule):
        self.subcells = np.asarray(subcells, dtype=float).reshape(-1, 3, 2)
        self.owners = np.asarray(owners, dtype=np.int64).reshape(-1)
        self.rule = rule
        p = self.subcells
        self.s_areas = 0.5 * np.abs(
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def total_s_area(self):
        return float(self.s_areas.sum())

    def __len__(self):
        return self.owners.shape[0]


def build_composite_scheme(solid_tri, xbar_map, fluid_mesh, rule=None):
    """Clip the mapped structure element against the fluid mesh.

    solid_tri is the (3, 2) element in structure coordinates, xbar_map
    the affine placement map on that element.  Candidate fluid
    triangles come from the structured-grid bounding box; each nonempty
    intersection polygon is fan-triangulated and pulled back to
    structure coordinates.  Raises DomainViolationError if the mapped
    element leaves the fluid rectangle.
    """
    if rule is None:
        rule = rule_for_degree(2)
    solid_tri = np.asarray(solid_tri, dtype=float).reshape(3, 2)
    mapped = xbar_map.apply(solid_tri)
    xmin, ymin, xmax, ymax = fluid_mesh.domain
    tol = 1e-12 * max(xmax - xmin, ymax - ymin)
    if (mapped[:, 0].min() < xmin - tol or mapped[:, 0].max() > xmax + tol
            or mapped[:, 1].min() < ymin - tol or mapped[:, 1].max() > ymax + tol):
        raise DomainViolationError("mapped structure element leaves the fluid domain")

    n = fluid_mesh.n_cells_per_side
    hx, hy = fluid_mesh.hx, fluid_mesh.hy
    ix0 = min(max(int((mapped[:, 0].min() - xmin) / hx - 1e-12), 0), n - 1)
    ix1 = min(max(int((mapped[:, 0].max() - xmin) / hx + 1e-12), 0), n - 1)
    iy0 = min(max(int((mapped[:, 1].min() - ymin) / hy - 1e-12), 0), n - 1)
    iy1 = min(max(int((mapped[:, 1].max() - ymin) / hy + 1e-12), 0), n - 1)

    area_mapped = abs(polygon_area(mapped))
    sliver = _SLIVER_REL * area_mapped
    m_list = [tuple(p) for p in mapped]
    if polygon_area(mapped) < 0:
        m_list.reverse()
    verts = fluid_mesh.vertices
    tris = fluid_mesh.triangles
    cell_tris = fluid_mesh.cell_tris

    subcells = []
    owners = []
    for jy in range(iy0, iy1 + 1):
        base = jy * n
        for jx in range(ix0, ix1 + 1):
            for t in cell_tris[base + jx]:
                tv = verts[tris[t]]
                c_list = [(tv[0, 0], tv[0, 1]), (tv[1, 0], tv[1, 1]),
                          (tv[2, 0], tv[2, 1])]
                diam = max(_tri_diam(m_list), _tri_diam(c_list))
                poly = _cleanup(_clip_raw(m_list, c_list, diam), diam)
                if len(poly) < 3:
                    continue
                if abs(polygon_area(np.asarray(poly))) < sliver:
                    continue
                p0 = poly[0]
                for i in range(1, len(poly) - 1):
                    a = 0.5 * abs((poly[i][0] - p0[0]) * (poly[i + 1][1] - p0[1])
                                  - (poly[i + 1][0] - p0[0]) * (poly[i][1] - p0[1]))
                    if a < sliver:
                        continue
                    subcells.append((p0, poly[i], poly[i + 1]))
                    owners.append(t)
    if subcells:
        sub = xbar_map.apply_inverse(np.asarray(subcells, dtype=float))
    else:
        sub = np.empty((0, 3, 2))
    return CompositeQuadScheme(sub, owners, rule)


def build_all_schemes(solid_mesh, xbar, fluid_mesh, rule=None):
    """Composite schemes for every element of the structure mesh.

    xbar is a single AffineMap used for all elements, or a sequence of
    per-element maps.
    """
    if rule is None:
        rule = rule_for_degree(2)
    single = hasattr(xbar, "apply")
    schemes = []
    for t in range(solid_mesh.n_triangles):
        amap = xbar if single else xbar[t]
        schemes.append(build_composite_scheme(
            solid_mesh.triangle_vertices(t), amap, fluid_mesh, rule))
    return schemes
