"""P1 finite-element assembly of the quasimomentum fibre operators.

For a quasimomentum tau in the Brillouin zone the fibre operator is the
magnetic Laplacian -(grad + i tau)^2 acting in the periodic Sobolev space on
the unit cell, with coefficient eps^-2 on the two stiff regions and 1 on the
soft annulus.  This module assembles, per region, the P1 sesquilinear forms

    k_tau(u, v) = int (grad u + i tau u) . conj(grad v + i tau v),
    m(u, v)     = int u conj(v),

with exact quadrature on every triangle, folds the periodic identification of
boundary vertices into a reduced set of free degrees of freedom, and provides
the interface Gram matrices used by the boundary-space inner product.

The stiff interior disc is assembled in gauged form: its tau-dependent
matrices are obtained from the tau = 0 matrices by conjugation with the nodal
phase diag(exp(i tau . x_j)).  This is a consistent P1 discretization of the
same form (the gauge transform is unitary), and it makes the nodal
interpolant of exp(-i tau . x) an exact null vector of the stiffness block,
mirroring the continuum fact that the plane wave is magnetic-harmonic on a
region without periodic identifications.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NotSPD, SingularSystem
from .geometry import REGION_NAMES, SOFT, STIFF_INT, STIFF_LS

REGIONS = (STIFF_INT, SOFT, STIFF_LS)


@dataclass
class RegionForms:
    """Dense local matrices of one material region.

    Attributes
    ----------
    verts : int array
        Free degrees of freedom carried by the region, in increasing order;
        local index k corresponds to free dof verts[k].
    K0, Cx, Cy, M : (n, n) real arrays
        Stiffness at tau = 0, the two first-order magnetic couplings and the
        mass matrix.  The full stiffness at quasimomentum tau is
        K0 + i (tau_x Cx + tau_y Cy) + |tau|^2 M.
    """

    verts: np.ndarray
    K0: np.ndarray
    Cx: np.ndarray
    Cy: np.ndarray
    M: np.ndarray


class FibreContext:
    """Assembled fibre-operator data on a fixed period-cell mesh.

    Parameters
    ----------
    mesh : PeriodCellMesh
    scale : float
        Uniform scaling factor applied to all vertex coordinates; scale = eps
        yields the same microstructure on the shrunk cell of side eps.

    Attributes
    ----------
    nfree : int
        Number of free (periodicity-reduced) degrees of freedom.
    regions : dict region tag -> RegionForms
    trace : dict {"int", "ls"} -> int array
        Interface loops in free-dof numbering (loop order).
    B : dict {"int", "ls"} -> (n_bnd, n_bnd) array
        Interface mass (Gram) matrices in loop order.
    coords : (nfree, 2) array
        Coordinates of the free dofs (masters), scaled.
    """

    def __init__(self, mesh, scale=1.0):
        self.mesh = mesh
        self.scale = float(scale)
        nv = len(mesh.vertices)
        pm = mesh.periodic_map
        self.free = mesh.free_dofs
        self.nfree = len(self.free)
        glob2free = np.full(nv, -1, dtype=int)
        glob2free[self.free] = np.arange(self.nfree)
        self.fold = glob2free[pm]  # global vertex -> free dof
        self.coords = mesh.vertices[self.free] * self.scale

        self.regions = {}
        for reg in REGIONS:
            self.regions[reg] = self._assemble_region(reg)

        self.trace = {
            "int": self.fold[mesh.gamma_int],
            "ls": self.fold[mesh.gamma_ls],
        }
        self.B = {
            "int": _loop_gram(mesh.vertices[mesh.gamma_int] * self.scale),
            "ls": _loop_gram(mesh.vertices[mesh.gamma_ls] * self.scale),
        }
        self.n_bnd = len(mesh.gamma_int)

    # -- region assembly ---------------------------------------------------

    def _assemble_region(self, reg):
        mesh = self.mesh
        tris = mesh.triangles[mesh.tri_region == reg]
        fverts = np.unique(self.fold[tris])
        n = len(fverts)
        f2l = {int(v): k for k, v in enumerate(fverts)}
        K0 = np.zeros((n, n))
        Cx = np.zeros((n, n))
        Cy = np.zeros((n, n))
        M = np.zeros((n, n))
        verts = mesh.vertices * self.scale
        for tri in tris:
            p = verts[tri]
            e1 = p[1] - p[0]
            e2 = p[2] - p[0]
            area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
            # constant P1 gradients: grad phi_k rows of Ginv
            grads = np.array(
                [
                    [p[1, 1] - p[2, 1], p[2, 0] - p[1, 0]],
                    [p[2, 1] - p[0, 1], p[0, 0] - p[2, 0]],
                    [p[0, 1] - p[1, 1], p[1, 0] - p[0, 0]],
                ]
            ) / (2.0 * area)
            loc = [f2l[int(self.fold[v])] for v in tri]
            kT = area * grads @ grads.T
            mT = (area / 12.0) * (np.ones((3, 3)) + np.eye(3))
            # int phi_j = area / 3; first-order term contributes
            # i (area/3) (tau . grad phi_i - tau . grad phi_j)
            cxT = (area / 3.0) * (grads[:, 0][:, None] - grads[None, :, 0])
            cyT = (area / 3.0) * (grads[:, 1][:, None] - grads[None, :, 1])
            for a in range(3):
                ia = loc[a]
                for bq in range(3):
                    ib = loc[bq]
                    K0[ia, ib] += kT[a, bq]
                    M[ia, ib] += mT[a, bq]
                    Cx[ia, ib] += cxT[a, bq]
                    Cy[ia, ib] += cyT[a, bq]
        return RegionForms(verts=fverts, K0=K0, Cx=Cx, Cy=Cy, M=M)

    # -- tau-dependent matrices --------------------------------------------

    def _phases(self, reg, tau):
        xy = self.coords[self.regions[reg].verts]
        return np.exp(1j * (xy @ np.asarray(tau, dtype=float)))

    def region_stiffness(self, reg, tau):
        """Local stiffness block of region `reg` at quasimomentum `tau`."""
        r = self.regions[reg]
        tau = np.asarray(tau, dtype=float)
        if reg == STIFF_INT:
            d = self._phases(reg, tau)
            return d.conj()[:, None] * r.K0 * d[None, :]
        return (
            r.K0.astype(complex)
            + 1j * (tau[0] * r.Cx + tau[1] * r.Cy)
            + float(tau @ tau) * r.M
        )

    def region_mass(self, reg, tau):
        """Local mass block of region `reg` (gauged on the interior disc)."""
        r = self.regions[reg]
        if reg == STIFF_INT:
            d = self._phases(reg, tau)
            return d.conj()[:, None] * r.M * d[None, :]
        return r.M.astype(complex)

    def scatter(self, reg, local):
        """Embed a region-local matrix into the free-dof numbering."""
        out = np.zeros((self.nfree, self.nfree), dtype=complex)
        v = self.regions[reg].verts
        out[np.ix_(v, v)] = local
        return out

    def mass_full(self, tau):
        """Global mass matrix at quasimomentum `tau` (Hermitian positive)."""
        out = np.zeros((self.nfree, self.nfree), dtype=complex)
        for reg in REGIONS:
            v = self.regions[reg].verts
            out[np.ix_(v, v)] += self.region_mass(reg, tau)
        return out

    def direct_operator(self, tau, eps):
        """Global stiffness and mass of the fibre operator.

        Returns the pair (A, M) of dense Hermitian matrices over the free
        dofs, where A carries the material weights eps^-2 (stiff) and 1
        (soft).  The operator itself is the pencil u -> M^-1 A u.
        """
        weights = {STIFF_INT: eps**-2, SOFT: 1.0, STIFF_LS: eps**-2}
        A = np.zeros((self.nfree, self.nfree), dtype=complex)
        for reg in REGIONS:
            v = self.regions[reg].verts
            A[np.ix_(v, v)] += weights[reg] * self.region_stiffness(reg, tau)
        return A, self.mass_full(tau)


def _loop_gram(pts):
    """Interface mass matrix of a closed polygonal loop of P1 traces."""
    n = len(pts)
    seg = np.roll(pts, -1, axis=0) - pts
    ell = np.hypot(seg[:, 0], seg[:, 1])
    B = np.zeros((n, n))
    for k in range(n):
        k1 = (k + 1) % n
        B[k, k] += ell[k] / 3.0
        B[k1, k1] += ell[k] / 3.0
        B[k, k1] += ell[k] / 6.0
        B[k1, k] += ell[k] / 6.0
    return B


def solve_shifted(A, M, z, rhs, rtol=1e-8):
    """Solve (A - z M) u = rhs with a residual contract.

    Raises SingularSystem when the relative residual exceeds `rtol`.
    """
    mat = A - z * M
    try:
        u = scipy.linalg.solve(mat, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystem(f"shifted solve at z={z}: {exc}") from exc
    res = np.linalg.norm(mat @ u - rhs)
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        return u
    if not np.isfinite(res) or res > rtol * scale:
        raise SingularSystem(
            f"shifted solve at z={z} left relative residual {res / scale:.3e}"
        )
    return u


def lu_solver(mat, rtol=1e-8):
    """Factor `mat` once; return a solver closure with a residual contract."""
    lu, piv = scipy.linalg.lu_factor(mat)

    def solve(rhs):
        u = scipy.linalg.lu_solve((lu, piv), rhs)
        scale = np.linalg.norm(rhs)
        if scale > 0.0:
            res = np.linalg.norm(mat @ u - rhs)
            if not np.isfinite(res) or res > rtol * scale:
                raise SingularSystem(
                    f"factored solve left relative residual {res / scale:.3e}"
                )
        return u

    return solve


def gram_cholesky(G):
    """Lower Cholesky factor of a Hermitian positive definite Gram matrix."""
    try:
        return scipy.linalg.cholesky(
            0.5 * (G + G.conj().T), lower=True, check_finite=False
        )
    except scipy.linalg.LinAlgError as exc:
        raise NotSPD(f"Gram matrix is not positive definite: {exc}") from exc


def weighted_operator_norm(T, gram_dom, gram_cod):
    """Operator norm of T between spaces with given Gram matrices.

    Computes max ||T x||_cod / ||x||_dom over x != 0, i.e. the largest
    singular value of L_cod^H T L_dom^-H with G = L L^H Cholesky factors.
    """
    L_dom = gram_cholesky(gram_dom)
    L_cod = gram_cholesky(gram_cod)
    core = L_cod.conj().T @ scipy.linalg.solve_triangular(
        L_dom, T.conj().T, lower=True
    ).conj().T
    if core.size == 0:
        return 0.0
    return float(scipy.linalg.svdvals(core)[0])


def weighted_adjoint(T, gram_dom, gram_cod):
    """Adjoint of T : (dom, G_dom) -> (cod, G_cod), i.e. G_dom^-1 T^H G_cod."""
    return scipy.linalg.solve(gram_dom, T.conj().T @ gram_cod)


def fibre_rescaling_check(mesh, theta, eps, nev=8):
    """Compare the weighted fibre on the unit cell with the rescaled cell.

    The eps^-2-weighted fibre at quasimomentum tau = eps * theta on the unit
    cell is unitarily equivalent to the unweighted stiff / eps^2-soft fibre at
    quasimomentum theta on the cell shrunk by eps.  Both pencils are built
    independently (the second on scaled coordinates) and their lowest `nev`
    eigenvalues returned.

    Returns
    -------
    (ev_unit, ev_scaled) : pair of float arrays, ascending.
    """
    theta = np.asarray(theta, dtype=float)
    ctx = FibreContext(mesh)
    A_u, M_u = ctx.direct_operator(eps * theta, eps)
    ctx_s = FibreContext(mesh, scale=eps)
    weights = {STIFF_INT: 1.0, SOFT: eps**2, STIFF_LS: 1.0}
    A_s = np.zeros((ctx_s.nfree, ctx_s.nfree), dtype=complex)
    for reg in REGIONS:
        v = ctx_s.regions[reg].verts
        A_s[np.ix_(v, v)] += weights[reg] * ctx_s.region_stiffness(reg, theta)
    M_s = ctx_s.mass_full(theta)
    ev_u = scipy.linalg.eigh(A_u, M_u, eigvals_only=True, subset_by_index=(0, nev - 1))
    ev_s = scipy.linalg.eigh(A_s, M_s, eigvals_only=True, subset_by_index=(0, nev - 1))
    return ev_u, ev_s


__all__ = [
    "REGIONS",
    "REGION_NAMES",
    "RegionForms",
    "FibreContext",
    "solve_shifted",
    "lu_solver",
    "gram_cholesky",
    "weighted_operator_norm",
    "weighted_adjoint",
    "fibre_rescaling_check",
]
