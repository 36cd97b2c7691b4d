"""Structured triangulations of axis-aligned rectangles.

A mesh is a uniform n-by-n split of a rectangle into square cells, each
cell cut into two triangles along one diagonal.  With orientation
"right" the diagonal runs from the lower-left to the upper-right corner
of the cell, with "left" it runs the other way.  Vertices are numbered
lexicographically (x fastest, row major), cells row by row, and the two
triangles of cell c are 2c and 2c+1, so matrix sparsity patterns are
reproducible across runs.

The mesh size h is the grid spacing (side length divided by n), not the
element diameter.  Midpoint refinement stores the four children of
parent triangle t consecutively at 4t..4t+3, and the refined mesh keeps
the structured cell-to-triangle lookup so point location stays O(1).

All meshes are immutable after construction.
"""

import numpy as np

__all__ = [
    "AffineMap",
    "Triangulation",
    "DomainViolationError",
    "uniform_mesh",
    "midpoint_refine",
    "element_map",
    "locate_point",
]

# Barycentric containment tolerance for point location, and the wider
# band around cell edges that routes a query through the careful
# tie-breaking path.
_BARY_TOL = 1e-12
_EDGE_BAND = 1e-9


class DomainViolationError(RuntimeError):
    """Raised when a mapped structure point leaves the fluid rectangle."""


class AffineMap:
    """Affine map x = matrix @ s + offset with cached determinant."""

    __slots__ = ("matrix", "offset", "det", "_inv")

    def __init__(self, matrix, offset):
        self.matrix = np.asarray(matrix, dtype=float).reshape(2, 2)
        self.offset = np.asarray(offset, dtype=float).reshape(2)
        self.det = (self.matrix[0, 0] * self.matrix[1, 1]
                    - self.matrix[0, 1] * self.matrix[1, 0])
        if self.det == 0.0:
            raise ValueError("affine map is singular")
        self._inv = np.array([[self.matrix[1, 1], -self.matrix[0, 1]],
                              [-self.matrix[1, 0], self.matrix[0, 0]]]) / self.det

    def apply(self, p):
        """Map one point (2,) or a stack of points (..., 2)."""
        p = np.asarray(p, dtype=float)
        return p @ self.matrix.T + self.offset

    def apply_inverse(self, p):
        p = np.asarray(p, dtype=float)
        return (p - self.offset) @ self._inv.T


class Triangulation:
    """Structured triangle mesh of an axis-aligned rectangle.

    Attributes
    ----------
    vertices : (n_vertices, 2) float array
    triangles : (n_triangles, 3) int array, counterclockwise
    n_cells_per_side : int
    domain : (xmin, ymin, xmax, ymax)
    orientation : "right" or "left"
    boundary_vertex_flags : (n_vertices,) bool array
    cell_tris : (n_cells_per_side**2, 2) int array mapping each grid cell
        to its two triangles, ordered so that column 0 holds the triangle
        covering the "low" half of the cell (below the right diagonal,
        or below-left of the left diagonal).
    """

    def __init__(self, vertices, triangles, n_cells_per_side, domain,
                 orientation, cell_tris, boundary_vertex_flags):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.n_cells_per_side = int(n_cells_per_side)
        self.domain = tuple(float(v) for v in domain)
        self.orientation = orientation
        self.cell_tris = np.asarray(cell_tris, dtype=np.int64)
        self.boundary_vertex_flags = np.asarray(boundary_vertex_flags, dtype=bool)
        self._areas = None
        self._grads = None
        self._centroids = None
        self._validate()

    # -- basic queries ---------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def hx(self):
        xmin, _, xmax, _ = self.domain
        return (xmax - xmin) / self.n_cells_per_side

    @property
    def hy(self):
        _, ymin, _, ymax = self.domain
        return (ymax - ymin) / self.n_cells_per_side

    @property
    def h(self):
        """Grid spacing (side / n); equal to hx for the square domains used here."""
        return max(self.hx, self.hy)

    def triangle_vertices(self, t):
        return self.vertices[self.triangles[t]]

    @property
    def areas(self):
        if self._areas is None:
            p = self.vertices[self.triangles]
            self._areas = 0.5 * np.abs(
                (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
            self._areas.setflags(write=False)
        return self._areas

    @property
    def grads(self):
        """Gradients of the three barycentric (P1 hat) functions per triangle.

        Shape (n_triangles, 3, 2); row i holds grad of the hat function
        of local vertex i, constant on the element.
        """
        if self._grads is None:
            p = self.vertices[self.triangles]
            a, b, c = p[:, 0], p[:, 1], p[:, 2]
            twoA = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                    - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))
            g = np.empty((self.n_triangles, 3, 2))
            g[:, 0, 0] = b[:, 1] - c[:, 1]
            g[:, 0, 1] = c[:, 0] - b[:, 0]
            g[:, 1, 0] = c[:, 1] - a[:, 1]
            g[:, 1, 1] = a[:, 0] - c[:, 0]
            g[:, 2, 0] = a[:, 1] - b[:, 1]
            g[:, 2, 1] = b[:, 0] - a[:, 0]
            g /= twoA[:, None, None]
            g.setflags(write=False)
            self._grads = g
        return self._grads

    @property
    def centroids(self):
        if self._centroids is None:
            self._centroids = self.vertices[self.triangles].mean(axis=1)
            self._centroids.setflags(write=False)
        return self._centroids

    def _validate(self):
        xmin, ymin, xmax, ymax = self.domain
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("degenerate domain rectangle")
        if self.orientation not in ("right", "left"):
            raise ValueError("orientation must be 'right' or 'left'")
        p = self.vertices[self.triangles]
        signed = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        if np.any(signed <= 0):
            raise ValueError("triangle with non-positive signed area")
        total = signed.sum()
        rect = (xmax - xmin) * (ymax - ymin)
        if abs(total - rect) > 1e-12 * rect:
            raise ValueError("triangle areas do not cover the rectangle")

    # -- point location --------------------------------------------------

    def _candidate_cells(self, ix, iy):
        n = self.n_cells_per_side
        cells = []
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                jx, jy = ix + dx, iy + dy
                if 0 <= jx < n and 0 <= jy < n:
                    cells.append(jy * n + jx)
        return cells

    def _contains(self, t, x, y, tol):
        i0, i1, i2 = self.triangles[t]
        v = self.vertices
        x0, y0 = v[i0]
        x1, y1 = v[i1]
        x2, y2 = v[i2]
        d = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        l1 = ((x - x0) * (y2 - y0) - (x2 - x0) * (y - y0)) / d
        l2 = ((x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)) / d
        l0 = 1.0 - l1 - l2
        return l0 >= -tol and l1 >= -tol and l2 >= -tol

    def locate_point(self, x):
        """Return the index of a triangle containing x, or None if outside.

        Points on shared edges or vertices resolve to the smallest
        containing triangle index, so assembly is deterministic.
        """
        px, py = float(x[0]), float(x[1])
        xmin, ymin, xmax, ymax = self.domain
        tol_x = _BARY_TOL * max(xmax - xmin, ymax - ymin)
        if (px < xmin - tol_x or px > xmax + tol_x
                or py < ymin - tol_x or py > ymax + tol_x):
            return None
        n = self.n_cells_per_side
        ix = min(max(int((px - xmin) / self.hx), 0), n - 1)
        iy = min(max(int((py - ymin) / self.hy), 0), n - 1)
        cand = np.unique(self.cell_tris[self._candidate_cells(ix, iy)])
        for tol in (_BARY_TOL, 1e-9):
            for t in cand:
                if self._contains(int(t), px, py, tol):
                    return int(t)
        # The point is inside the rectangle but rounding pushed it just
        # outside every candidate; take the nearest one by barycentric
        # defect so interior queries never fail.
        best, best_def = None, -np.inf
        for t in cand:
            i0, i1, i2 = self.triangles[int(t)]
            v = self.vertices
            d = ((v[i1, 0] - v[i0, 0]) * (v[i2, 1] - v[i0, 1])
                 - (v[i2, 0] - v[i0, 0]) * (v[i1, 1] - v[i0, 1]))
            l1 = ((px - v[i0, 0]) * (v[i2, 1] - v[i0, 1])
                  - (v[i2, 0] - v[i0, 0]) * (py - v[i0, 1])) / d
            l2 = ((v[i1, 0] - v[i0, 0]) * (py - v[i0, 1])
                  - (px - v[i0, 0]) * (v[i1, 1] - v[i0, 1])) / d
            defect = min(1.0 - l1 - l2, l1, l2)
            if defect > best_def:
                best, best_def = int(t), defect
        return best

    def locate_points(self, pts):
        """Vectorized locate_point; returns -1 for outside points.

        Points well inside a cell use a direct structured lookup; points
        near any cell edge or the cell diagonal fall back to the scalar
        path so the smallest-index tie-break is preserved.
        """
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        xmin, ymin, xmax, ymax = self.domain
        n = self.n_cells_per_side
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        tol_x = _BARY_TOL * max(xmax - xmin, ymax - ymin)
        inside = ((pts[:, 0] >= xmin - tol_x) & (pts[:, 0] <= xmax + tol_x)
                  & (pts[:, 1] >= ymin - tol_x) & (pts[:, 1] <= ymax + tol_x))
        tx = (pts[:, 0] - xmin) / self.hx
        ty = (pts[:, 1] - ymin) / self.hy
        ix = np.clip(np.floor(tx).astype(np.int64), 0, n - 1)
        iy = np.clip(np.floor(ty).astype(np.int64), 0, n - 1)
        fx = tx - ix
        fy = ty - iy
        if self.orientation == "right":
            low = fy <= fx
            near_diag = np.abs(fx - fy) < _EDGE_BAND
        else:
            low = fx + fy <= 1.0
            near_diag = np.abs(fx + fy - 1.0) < _EDGE_BAND
        near = (near_diag | (fx < _EDGE_BAND) | (fx > 1.0 - _EDGE_BAND)
                | (fy < _EDGE_BAND) | (fy > 1.0 - _EDGE_BAND))
        cells = iy * n + ix
        fast = inside & ~near
        out[fast] = self.cell_tris[cells[fast], np.where(low[fast], 0, 1)]
        slow = inside & near
        for i in np.nonzero(slow)[0]:
            t = self.locate_point(pts[i])
            out[i] = -1 if t is None else t
        return out

    # -- output ----------------------------------------------------------

    def dump(self, path):
        """Plain-text dump: header ``vertices N triangles M``, then vertex
        lines ``x y``, then triangle lines ``i j k``."""
        with open(path, "w") as fh:
            fh.write("vertices %d triangles %d\n"
                     % (self.n_vertices, self.n_triangles))
            for x, y in self.vertices:
                fh.write("%.17g %.17g\n" % (x, y))
            for i, j, k in self.triangles:
                fh.write("%d %d %d\n" % (i, j, k))


def uniform_mesh(lo, hi, n, orientation="right"):
    """Uniform structured mesh of the rectangle [lo, hi] with n cells per side.

    lo and hi are the (x, y) corners.  Grid spacing is side/n per axis.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    xmin, ymin = float(lo[0]), float(lo[1])
    xmax, ymax = float(hi[0]), float(hi[1])
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("degenerate domain rectangle")
    xs = np.linspace(xmin, xmax, n + 1)
    ys = np.linspace(ymin, ymax, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    iy, ix = np.divmod(np.arange(n * n), n)
    v00 = iy * (n + 1) + ix
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    if orientation == "right":
        triangles[0::2] = np.column_stack([v00, v10, v11])
        triangles[1::2] = np.column_stack([v00, v11, v01])
    elif orientation == "left":
        triangles[0::2] = np.column_stack([v00, v10, v01])
        triangles[1::2] = np.column_stack([v10, v11, v01])
    else:
        raise ValueError("orientation must be 'right' or 'left'")

    cells = np.arange(n * n)
    cell_tris = np.column_stack([2 * cells, 2 * cells + 1])
    gx, gy = np.meshgrid(np.arange(n + 1), np.arange(n + 1))
    boundary = ((gx == 0) | (gx == n) | (gy == 0) | (gy == n)).ravel()
    return Triangulation(vertices, triangles, n, (xmin, ymin, xmax, ymax),
                         orientation, cell_tris, boundary)


def midpoint_refine(mesh):
    """Split every triangle into four by connecting edge midpoints.

    Children of parent t are stored at 4t..4t+3 in the order corner(a),
    corner(b), corner(c), middle.  Midpoint vertices are appended after
    the parent vertices in first-encounter order, so the numbering is
    deterministic.
    """
    verts = mesh.vertices
    tris = mesh.triangles
    midpoint_id = {}
    new_pts = []

    def mid(i, j):
        key = (i, j) if i < j else (j, i)
        m = midpoint_id.get(key)
        if m is None:
            m = mesh.n_vertices + len(new_pts)
            midpoint_id[key] = m
            new_pts.append(0.5 * (verts[key[0]] + verts[key[1]]))
        return m

    children = np.empty((4 * mesh.n_triangles, 3), dtype=np.int64)
    for t in range(mesh.n_triangles):
        a, b, c = tris[t]
        mab = mid(a, b)
        mbc = mid(b, c)
        mca = mid(c, a)
        children[4 * t + 0] = (a, mab, mca)
        children[4 * t + 1] = (mab, b, mbc)
        children[4 * t + 2] = (mca, mbc, c)
        children[4 * t + 3] = (mab, mbc, mca)

    vertices = np.vstack([verts, np.asarray(new_pts)])
    n2 = 2 * mesh.n_cells_per_side
    xmin, ymin, xmax, ymax = mesh.domain
    hx = (xmax - xmin) / n2
    hy = (ymax - ymin) / n2

    cent = vertices[children].mean(axis=1)
    cx = np.clip(np.floor((cent[:, 0] - xmin) / hx).astype(np.int64), 0, n2 - 1)
    cy = np.clip(np.floor((cent[:, 1] - ymin) / hy).astype(np.int64), 0, n2 - 1)
    cells = cy * n2 + cx
    fx = (cent[:, 0] - xmin) / hx - cx
    fy = (cent[:, 1] - ymin) / hy - cy
    if mesh.orientation == "right":
        low = fy < fx
    else:
        low = fx + fy < 1.0
    cell_tris = np.full((n2 * n2, 2), -1, dtype=np.int64)
    idx = np.arange(children.shape[0])
    cell_tris[cells[low], 0] = idx[low]
    cell_tris[cells[~low], 1] = idx[~low]
    if np.any(cell_tris < 0):
        raise ValueError("refined mesh lost its structured cell layout")

    tol = 1e-12 * max(xmax - xmin, ymax - ymin)
    boundary = ((np.abs(vertices[:, 0] - xmin) < tol)
                | (np.abs(vertices[:, 0] - xmax) < tol)
                | (np.abs(vertices[:, 1] - ymin) < tol)
                | (np.abs(vertices[:, 1] - ymax) < tol))
    return Triangulation(vertices, children, n2, mesh.domain,
                         mesh.orientation, cell_tris, boundary)


def element_map(mesh, t):
    """Affine map from the reference triangle (0,0),(1,0),(0,1) onto triangle t."""
    if not 0 <= t < mesh.n_triangles:
        raise IndexError("triangle index out of range")
    a, b, c = mesh.triangle_vertices(t)
    return AffineMap(np.column_stack([b - a, c - a]), a)


def locate_point(mesh, x):
    """Module-level alias for Triangulation.locate_point."""
    return mesh.locate_point(x)
