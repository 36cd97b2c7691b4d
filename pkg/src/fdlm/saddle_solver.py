"""Block assembly and direct solution of the coupled saddle system.

Unknown order is (u, X, lambda, p, sigma) where sigma is the scalar
multiplier enforcing zero pressure mean.  The system reads

    [ Af    0    Cf^T  -B^T  0  ] [u]      [F]
    [ 0     As  -Cs^T   0    0  ] [X]      [G]
    [ Cf   -Cs    0     0    0  ] [l]  =   [D]
    [ -B    0     0     0    m  ] [p]      [0]
    [ 0     0     0    m^T   0  ] [s]      [0]

and is symmetric indefinite.  Velocity Dirichlet rows and columns are
eliminated symmetrically (unit diagonal, zero load), and the factored
system is solved with a sparse LU.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .fespace import FEFunction

__all__ = ["Blocks", "BlockSystem", "DiscreteSolution",
           "SingularSystemError", "build_system", "solve",
           "dump_solution"]


class SingularSystemError(RuntimeError):
    """The assembled system could not be factored or solved."""


class Blocks:
    """Container for the assembled matrix blocks and the mean row."""

    def __init__(self, Af, As, B, Cf, Cs, mean_row):
        self.Af = Af
        self.As = As
        self.B = B
        self.Cf = Cf
        self.Cs = Cs
        self.mean_row = np.asarray(mean_row, dtype=float)


class BlockSystem:
    """Assembled global matrix with its right-hand side and dof layout."""

    def __init__(self, matrix, rhs, offsets, spaces, blocks, dirichlet_mask):
        self.matrix = matrix
        self.rhs = rhs
        self.offsets = offsets
        self.spaces = spaces
        self.blocks = blocks
        self.dirichlet_mask = dirichlet_mask

    @property
    def n_dofs(self):
        return self.matrix.shape[0]

    def split(self, x):
        """Slice a global vector into (u, X, lambda, p, sigma) parts."""
        o = self.offsets
        return (x[o["u"]:o["x"]], x[o["x"]:o["lambda"]],
                x[o["lambda"]:o["p"]], x[o["p"]:o["sigma"]],
                float(x[o["sigma"]]))


class DiscreteSolution:
    """Finite element functions solving the coupled system."""

    def __init__(self, u, p, X, lam, sigma, residual_norm, rhs_norm):
        self.u = u
        self.p = p
        self.X = X
        self.lam = lam
        self.sigma = sigma
        self.residual_norm = residual_norm
        self.rhs_norm = rhs_norm

    @property
    def relative_residual(self):
        if self.rhs_norm == 0.0:
            return self.residual_norm
        return self.residual_norm / self.rhs_norm


def build_system(blocks, rhs, spaces):
    """Assemble the bordered global matrix and eliminate Dirichlet dofs.

    blocks: Blocks instance; rhs: (F, G, D) tuple; spaces: (V, S, L, Q).
    The velocity space's dirichlet_mask marks the constrained dofs.
    """
    V, S, L, Q = spaces
    nu, ns, nl, npre = V.n_dofs, S.n_dofs, L.n_dofs, Q.n_dofs
    if blocks.Af.shape != (nu, nu):
        raise ValueError("fluid block shape mismatch")
    if blocks.As.shape != (ns, ns):
        raise ValueError("structure block shape mismatch")
    if blocks.B.shape != (npre, nu):
        raise ValueError("divergence block shape mismatch")
    if blocks.Cf.shape != (nl, nu) or blocks.Cs.shape != (nl, ns):
        raise ValueError("coupling block shape mismatch")
    if blocks.mean_row.shape != (npre,):
        raise ValueError("mean row length mismatch")

    m = sp.csr_matrix(blocks.mean_row.reshape(1, -1))
    A = sp.bmat([
        [blocks.Af, None, blocks.Cf.T, -blocks.B.T, None],
        [None, blocks.As, -blocks.Cs.T, None, None],
        [blocks.Cf, -blocks.Cs, None, None, None],
        [-blocks.B, None, None, None, m.T],
        [None, None, None, m, None],
    ], format="coo")

    F, G, D = rhs
    b = np.concatenate([F, G, D, np.zeros(npre), [0.0]])
    if b.shape[0] != A.shape[0]:
        raise ValueError("right-hand side length mismatch")

    offsets = {"u": 0, "x": nu, "lambda": nu + ns, "p": nu + ns + nl,
               "sigma": nu + ns + nl + npre}

    mask = np.zeros(A.shape[0], dtype=bool)
    mask[:nu] = V.dirichlet_mask
    keep = ~(mask[A.row] | mask[A.col])
    fixed = np.flatnonzero(mask)
    rows = np.concatenate([A.row[keep], fixed])
    cols = np.concatenate([A.col[keep], fixed])
    data = np.concatenate([A.data[keep], np.ones(fixed.size)])
    b = b.copy()
    b[fixed] = 0.0
    matrix = sp.coo_matrix((data, (rows, cols)), shape=A.shape).tocsr()
    matrix.sum_duplicates()
    return BlockSystem(matrix, b, offsets, spaces, blocks, mask)


# Relative size of the stabilizing diagonal shift.  The saddle matrix
# has zero diagonal in the multiplier, pressure, and mean rows, which
# makes threshold row pivoting explode the fill of the factors.  Adding
# +eps (primal rows) / -eps (dual rows) scaled by the row magnitude
# makes the matrix quasidefinite, so a fill-reducing symmetric ordering
# survives factorization with pure diagonal pivoting; the perturbation
# is then removed by iterative refinement against the unshifted matrix.
_SHIFT = 1e-8
_MAX_REFINE = 40


def _factor_shifted(A_csr, dual_start):
    n = A_csr.shape[0]
    rowmax = np.asarray(abs(A_csr).max(axis=1).todense()).ravel()
    if not np.all(rowmax > 0):
        raise SingularSystemError("matrix has an empty row")
    sign = np.ones(n)
    sign[dual_start:] = -1.0
    shifted = (A_csr + sp.diags(_SHIFT * rowmax * sign)).tocsc()
    try:
        return splu(shifted, permc_spec="MMD_AT_PLUS_A",
                    options=dict(SymmetricMode=True, DiagPivotThresh=0.0))
    except (RuntimeError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from exc


def solve(system):
    """Factor and solve; returns a DiscreteSolution with residual data.

    The factorization is computed for a slightly shifted matrix and the
    shift is removed by iterative refinement, which converges in a few
    steps; failure to reach a small relative residual is reported as a
    singular system.
    """
    A = system.matrix.tocsr()
    b = system.rhs
    lu = _factor_shifted(A, system.offsets["lambda"])
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solver produced non-finite values")
    if bnorm > 0.0:
        prev = np.inf
        for _ in range(_MAX_REFINE):
            res = b - A @ x
            rel = np.linalg.norm(res) / bnorm
            if rel < 1e-12 or rel > 0.5 * prev:
                break
            prev = rel
            x = x + lu.solve(res)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("refinement produced non-finite values")
        if np.linalg.norm(b - A @ x) / bnorm > 1e-9:
            raise SingularSystemError(
                "iterative refinement stalled above tolerance")
    res = A @ x - b
    V, S, L, Q = system.spaces
    uvec, xvec, lvec, pvec, sigma = system.split(x)
    return DiscreteSolution(
        u=FEFunction(V, uvec),
        p=FEFunction(Q, pvec),
        X=FEFunction(S, xvec),
        lam=FEFunction(L, lvec),
        sigma=sigma,
        residual_norm=float(np.linalg.norm(res)),
        rhs_norm=float(np.linalg.norm(system.rhs)),
    )


def dump_solution(sol, path):
    """CSV dump of all coefficient vectors: field,dof_index,value."""
    with open(path, "w") as fh:
        fh.write("field,dof_index,value\n")
        for name, fn in (("u", sol.u), ("x", sol.X),
                         ("lambda", sol.lam), ("p", sol.p)):
            for i, v in enumerate(fn.coefficients):
                fh.write("%s,%d,%.17g\n" % (name, i, v))
