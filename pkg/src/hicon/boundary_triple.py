"""Boundary triple of the decoupled cell operator.

The cell decomposes into three components (stiff disc, soft annulus, stiff
landscape).  Decoupling them with Dirichlet conditions on the two interface
circles (keeping the periodic identification on the outer boundary of the
landscape) yields the reference operator A0.  The triple consists of

* the tau-harmonic lift Pi: boundary data on E_h = trace(Gamma_int) (+)
  trace(Gamma_ls) extended componentwise by the magnetic-harmonic solution,
* the Dirichlet-to-Neumann map Lambda, realized per component as
  phi -> -B^-1 Schur(0) phi with the Schur complement of the stiffness onto
  the trace degrees of freedom,
* the solution operators S(z) (shifted lifts) and the M-operator
  M(z) = Lambda + z Pi^* (I - z A0^-1)^-1 Pi, which at the discrete level is
  exactly -B^-1 Schur(z), the z-shifted weighted DtN sum.

Sign convention: the conormal derivative carries a minus sign, so DtN
operators are negative semidefinite and Steklov spectra are listed
descending from their largest element (0 for a component without active
boundary conditions beyond the traces).

The stiff components carry material weight eps^-2.  Their shifted operators
are evaluated through the interior-shift identity
(eps^-2 K - z M) = eps^-2 (K - eps^2 z M): one unweighted factorization at
the contracted shift eps^2 z serves lift, DtN and decoupled resolvent.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateEigenvalue, EigSolverFailure, SingularSystem
from .fem_assembly import FibreContext, lu_solver
from .geometry import SOFT, STIFF_INT, STIFF_LS

STIFF_REGIONS = (STIFF_INT, STIFF_LS)


def component_dofs(ctx, region):
    """Index bookkeeping of one component.

    Returns
    -------
    (verts, pos_trace, pos_int)
        verts: the component's free dofs (increasing); pos_trace: positions
        of its trace dofs within verts, ordered as the boundary-space basis
        (interface loop order; for the soft component the inner loop is
        followed by the outer loop); pos_int: remaining positions.
    """
    verts = ctx.regions[region].verts
    if region == STIFF_INT:
        tr = ctx.trace["int"]
    elif region == STIFF_LS:
        tr = ctx.trace["ls"]
    else:
        tr = np.concatenate([ctx.trace["int"], ctx.trace["ls"]])
    pos_trace = np.searchsorted(verts, tr)
    assert np.array_equal(verts[pos_trace], tr)
    mask = np.ones(len(verts), dtype=bool)
    mask[pos_trace] = False
    pos_int = np.flatnonzero(mask)
    return verts, pos_trace, pos_int


def component_gram(ctx, region):
    """Boundary Gram matrix of the component's trace space."""
    if region == STIFF_INT:
        return ctx.B["int"]
    if region == STIFF_LS:
        return ctx.B["ls"]
    return scipy.linalg.block_diag(ctx.B["int"], ctx.B["ls"])


def boundary_gram(ctx):
    """Gram matrix of E_h = trace(Gamma_int) (+) trace(Gamma_ls)."""
    return scipy.linalg.block_diag(ctx.B["int"], ctx.B["ls"])


def _lift_and_schur(ctx, region, tau, z):
    """Shifted lift matrix and Schur complement of one component.

    Builds P = K(tau) - z M(tau) on the component, eliminates the interior
    block and returns (S, Schur) where S maps trace data to the full local
    field (trace rows identity) and Schur = P_GG - P_GI P_II^-1 P_IG.
    """
    verts, pg, pi = component_dofs(ctx, region)
    P = ctx.region_stiffness(region, tau) - z * ctx.region_mass(region, tau)
    P_II = P[np.ix_(pi, pi)]
    P_IG = P[np.ix_(pi, pg)]
    P_GI = P[np.ix_(pg, pi)]
    P_GG = P[np.ix_(pg, pg)]
    solve = lu_solver(P_II)
    X = solve(P_IG)
    schur = P_GG - P_GI @ X
    S = np.zeros((len(verts), len(pg)), dtype=complex)
    S[pg, np.arange(len(pg))] = 1.0
    S[np.ix_(pi, np.arange(len(pg)))] = -X
    return S, schur


def solution_operator(ctx, region, tau, z):
    """Shifted tau-harmonic solution operator of one component.

    Column j solves (K(tau) - z M(tau)) u = 0 in the interior with Dirichlet
    data equal to the j-th trace basis vector; trace rows are exactly the
    identity.  At z = 0 this is the tau-harmonic lift Pi of the component.
    """
    S, _ = _lift_and_schur(ctx, region, tau, z)
    return S


def harmonic_lift(ctx, region, tau, boundary_data):
    """tau-harmonic extension of boundary data into one component."""
    S = solution_operator(ctx, region, tau, 0.0)
    return S @ np.asarray(boundary_data, dtype=complex)


def dtn_matrix(ctx, region, tau, z=0.0):
    """Schur realization of the (shifted) Dirichlet-to-Neumann map.

    Returns (Schur, B); the DtN operator acts as phi -> -B^-1 Schur phi.
    """
    _, schur = _lift_and_schur(ctx, region, tau, z)
    return schur, component_gram(ctx, region)


def steklov_eigs(ctx, region, tau, k=None):
    """Leading Steklov eigenpairs of a component's unweighted DtN.

    Solves -Schur(0) psi = mu B psi.  Eigenvalues are returned descending
    (all <= 0 up to roundoff), eigenvectors B-orthonormal with the
    largest-modulus entry rotated to the positive real axis.
    """
    schur, B = dtn_matrix(ctx, region, tau, 0.0)
    n = schur.shape[0]
    if k is None:
        k = n
    if k > n:
        raise ValueError("requested more eigenpairs than trace dimension")
    try:
        mu, psi = scipy.linalg.eigh(-0.5 * (schur + schur.conj().T), B)
    except scipy.linalg.LinAlgError as exc:
        raise EigSolverFailure(f"Steklov eigensolve failed: {exc}") from exc
    order = np.argsort(mu)[::-1][:k]
    mu = mu[order]
    psi = psi[:, order]
    for j in range(psi.shape[1]):
        p = psi[np.argmax(np.abs(psi[:, j])), j]
        psi[:, j] *= np.conj(p) / abs(p)
    return mu, psi


def m_operator(ctx, eps, tau, z):
    """Weighted M-operator on the boundary space E_h.

    M(z) = -B^-1 [ eps^-2 Schur_int(eps^2 z) (+) eps^-2 Schur_ls(eps^2 z)
                   + Schur_soft(z) ],
    the z-shifted weighted DtN sum over the three components.  At z = 0 this
    is the weighted DtN operator Lambda.
    """
    n = ctx.n_bnd
    sigma = np.zeros((2 * n, 2 * n), dtype=complex)
    sigma[:n, :n] += eps**-2 * _lift_and_schur(ctx, STIFF_INT, tau, eps**2 * z)[1]
    sigma[n:, n:] += eps**-2 * _lift_and_schur(ctx, STIFF_LS, tau, eps**2 * z)[1]
    sigma += _lift_and_schur(ctx, SOFT, tau, z)[1]
    return -scipy.linalg.solve(boundary_gram(ctx), sigma)


def full_solution_operator(ctx, eps, tau, z):
    """Weighted solution operator S(z) : E_h -> free dofs.

    Column j is the componentwise shifted lift of the j-th boundary basis
    vector for the eps^-2-weighted pencil; the stiff components use the
    contracted interior shift eps^2 z.
    """
    n = ctx.n_bnd
    out = np.zeros((ctx.nfree, 2 * n), dtype=complex)
    pieces = (
        (STIFF_INT, eps**2 * z, np.arange(n)),
        (STIFF_LS, eps**2 * z, np.arange(n, 2 * n)),
        (SOFT, z, np.arange(2 * n)),
    )
    for region, shift, cols in pieces:
        S, _ = _lift_and_schur(ctx, region, tau, shift)
        out[np.ix_(ctx.regions[region].verts, cols)] = S
    return out


def decoupled_resolvent(ctx, eps, tau, z):
    """Resolvent (A0 - z)^-1 of the Dirichlet-decoupled weighted operator.

    Acts on coefficient vectors of functions over the free dofs; the output
    vanishes on both interface loops and solves the weighted shifted problem
    per component with the function's mass data as the right-hand side.
    """
    weights = {STIFF_INT: eps**-2, SOFT: 1.0, STIFF_LS: eps**-2}
    out = np.zeros((ctx.nfree, ctx.nfree), dtype=complex)
    for region, w in weights.items():
        verts, _, pi = component_dofs(ctx, region)
        K = ctx.region_stiffness(region, tau)
        M = ctx.region_mass(region, tau)
        P_II = (w * K - z * M)[np.ix_(pi, pi)]
        rhs = M[pi, :]  # pairs the input function against interior rows
        try:
            out[np.ix_(verts[pi], verts)] = lu_solver(P_II)(rhs)
        except SingularSystem as exc:
            raise SingularSystem(
                f"decoupled resolvent singular on component {region}: {exc}"
            ) from exc
    return out


@dataclass
class SpectralProjection:
    """Leading Steklov data of the two stiff components at one tau.

    psi1_*: B-normalized first Steklov eigenvectors on the traces;
    mu1_*: first Steklov eigenvalues (stiff-int entered as exact 0 once it
    passes the zero check); Psi1_*: tau-harmonic lifts of psi1 into the
    component; norm_*: mass-weighted norms ||Psi1||.
    """

    tau: np.ndarray
    psi1_int: np.ndarray
    psi1_ls: np.ndarray
    mu1_int: float
    mu1_ls: float
    Psi1_int: np.ndarray
    Psi1_ls: np.ndarray
    norm_int: float
    norm_ls: float

    def basis(self, n_bnd):
        """Columns (psi1_int (+) 0) and (0 (+) psi1_ls) in E_h."""
        V = np.zeros((2 * n_bnd, 2), dtype=complex)
        V[:n_bnd, 0] = self.psi1_int
        V[n_bnd:, 1] = self.psi1_ls
        return V

    def projector(self, B):
        """Rank-two B-orthogonal projector onto span{psi1_int, psi1_ls}."""
        V = self.basis(B.shape[0] // 2)
        return V @ (V.conj().T @ B)


def spectral_projection(ctx, tau, gap_floor=1e-6):
    """Leading Steklov eigendata of both stiff components.

    Raises DegenerateEigenvalue when mu1 is not separated from mu2 by at
    least gap_floor * |mu2| on either component.
    """
    tau = np.asarray(tau, dtype=float)
    data = {}
    for region, key in ((STIFF_INT, "int"), (STIFF_LS, "ls")):
        mu, psi = steklov_eigs(ctx, region, tau, k=2)
        if abs(mu[0] - mu[1]) < gap_floor * abs(mu[1]):
            raise DegenerateEigenvalue(
                f"component {key}: mu1={mu[0]:.3e} too close to mu2={mu[1]:.3e}"
            )
        lift = harmonic_lift(ctx, region, tau, psi[:, 0])
        M = ctx.region_mass(region, tau)
        nrm = float(np.sqrt(np.vdot(lift, M @ lift).real))
        mu1 = float(mu[0])
        if region == STIFF_INT and abs(mu1) < 1e-8:
            # the plane-wave trace is an exact null vector of the gauged
            # Schur complement; record its eigenvalue as exact zero
            mu1 = 0.0
        if region == STIFF_LS and abs(mu1) < 1e-12:
            # at tau = 0 the constant trace is an exact discrete null vector;
            # snap the roundoff-sized eigenvalue so that the weighted value
            # eps^-2 mu1 cannot pollute small-eps sweeps
            mu1 = 0.0
        data[key] = (psi[:, 0], mu1, lift, nrm)
    return SpectralProjection(
        tau=tau,
        psi1_int=data["int"][0],
        psi1_ls=data["ls"][0],
        mu1_int=data["int"][1],
        mu1_ls=data["ls"][1],
        Psi1_int=data["int"][2],
        Psi1_ls=data["ls"][2],
        norm_int=data["int"][3],
        norm_ls=data["ls"][3],
    )


__all__ = [
    "STIFF_REGIONS",
    "component_dofs",
    "component_gram",
    "boundary_gram",
    "solution_operator",
    "harmonic_lift",
    "dtn_matrix",
    "steklov_eigs",
    "m_operator",
    "full_solution_operator",
    "decoupled_resolvent",
    "SpectralProjection",
    "spectral_projection",
]
