"""Resolvents through the boundary-triple formula and their block algebra.

The central identity is the resolvent formula

    (A_eps - z)^-1 = (A0 - z)^-1 - S(z) M(z)^-1 S(zbar)^*,

which at the discrete level is exact matrix algebra: the decoupled resolvent,
the shifted lifts and the M-operator are all Schur-complement fragments of
one weighted pencil.  The module also decomposes M(z) relative to the
rank-two spectral projector of the stiff Steklov problems, inverts it by the
Schur-Frobenius complement, and compresses the resolvent to the soft
component (the generalized resolvent of the soft part of the cell).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .boundary_triple import (
    boundary_gram,
    component_dofs,
    decoupled_resolvent,
    full_solution_operator,
    m_operator,
    solution_operator,
)
from .errors import BlockSingular
from .fem_assembly import lu_solver
from .geometry import SOFT


@dataclass
class BlockM:
    """M(z) in a B-orthonormal basis adapted to the rank-two projector.

    The first two basis vectors are the stiff Steklov vectors; the rest
    complete them B-orthonormally.  Blocks: A = P M P (2x2), Bblk = P M P_perp,
    Eblk = P_perp M P, Dblk = P_perp M P_perp.
    """

    A: np.ndarray
    Bblk: np.ndarray
    Eblk: np.ndarray
    Dblk: np.ndarray
    basis: np.ndarray  # columns U with U^H B U = I
    Mtilde: np.ndarray  # full operator matrix in the adapted basis
    gram: np.ndarray  # the boundary Gram B


def adapted_basis(sp, B):
    """Deterministic B-orthonormal basis whose first columns are psi1's.

    Works in Cholesky coordinates (B = L L^H): the two Steklov columns are
    mapped to an orthonormal pair and completed by the Householder reflectors
    of a full QR factorization.
    """
    n = B.shape[0]
    V = sp.basis(n // 2)
    L = scipy.linalg.cholesky(0.5 * (B + B.conj().T), lower=True)
    W = L.conj().T @ V
    Q, _ = scipy.linalg.qr(W, mode="full")
    Q = Q.astype(complex)
    Q[:, : V.shape[1]] = W
    return scipy.linalg.solve_triangular(L.conj().T, Q, lower=False)


def block_decompose(Mmat, sp, B):
    """Decompose an operator matrix on E_h relative to the projector basis."""
    U = adapted_basis(sp, B)
    Mt = U.conj().T @ B @ Mmat @ U
    return BlockM(
        A=Mt[:2, :2],
        Bblk=Mt[:2, 2:],
        Eblk=Mt[2:, :2],
        Dblk=Mt[2:, 2:],
        basis=U,
        Mtilde=Mt,
        gram=B,
    )


def invert_m(blocks):
    """Invert M(z) via the Schur-Frobenius complement of its 2x2 head.

    Returns
    -------
    (Minv, schur, diagnostics)
        Minv: inverse in the original E_h coordinates; schur: the complement
        S = D - E A^-1 B; diagnostics: dict with the B-weighted norms
        norm_A_inv, norm_S_inv and dist_Minv_diag = ||M^-1 - diag(A^-1, 0)||.
    """
    A, Bb, E, D = blocks.A, blocks.Bblk, blocks.Eblk, blocks.Dblk
    try:
        Ainv = scipy.linalg.inv(A)
    except scipy.linalg.LinAlgError as exc:
        raise BlockSingular(f"projector block A is singular: {exc}") from exc
    if not np.all(np.isfinite(Ainv)):
        raise BlockSingular("projector block A is singular")
    schur = D - E @ Ainv @ Bb
    try:
        Sinv = scipy.linalg.inv(schur)
    except scipy.linalg.LinAlgError as exc:
        raise BlockSingular(f"Schur complement block is singular: {exc}") from exc
    if not np.all(np.isfinite(Sinv)):
        raise BlockSingular("Schur complement block is singular")
    n = blocks.Mtilde.shape[0]
    inv_t = np.zeros((n, n), dtype=complex)
    inv_t[:2, :2] = Ainv + Ainv @ Bb @ Sinv @ E @ Ainv
    inv_t[:2, 2:] = -Ainv @ Bb @ Sinv
    inv_t[2:, :2] = -Sinv @ E @ Ainv
    inv_t[2:, 2:] = Sinv
    resid = np.abs(inv_t @ blocks.Mtilde - np.eye(n)).max()
    if resid > 1e-6:
        raise BlockSingular(f"block inverse residual {resid:.3e}")
    diag_head = np.zeros_like(inv_t)
    diag_head[:2, :2] = Ainv
    diagnostics = {
        "norm_A_inv": float(scipy.linalg.svdvals(Ainv)[0]),
        "norm_S_inv": float(scipy.linalg.svdvals(Sinv)[0]),
        "dist_Minv_diag": float(scipy.linalg.svdvals(inv_t - diag_head)[0]),
    }
    U = blocks.basis
    # M = U Mtilde U^H B  =>  M^-1 = U Mtilde^-1 U^H B
    Minv = U @ inv_t @ U.conj().T @ blocks.gram
    return Minv, schur, diagnostics


def solution_adjoint(ctx, S, gram_cod):
    """Weighted adjoint of a solution operator S : (E_h, B) -> (L^2, M)."""
    B = boundary_gram(ctx)
    return scipy.linalg.solve(B, S.conj().T @ gram_cod)


def direct_resolvent(ctx, eps, tau, z):
    """Resolvent of the assembled fibre pencil: f -> (A - z M)^-1 M f."""
    A, Mf = ctx.direct_operator(tau, eps)
    return lu_solver(A - z * Mf)(Mf)


def resolvent_krein(ctx, eps, tau, z):
    """Resolvent of the fibre operator via the boundary-triple formula."""
    Mf = ctx.mass_full(tau)
    R0 = decoupled_resolvent(ctx, eps, tau, z)
    S_z = full_solution_operator(ctx, eps, tau, z)
    S_zbar = full_solution_operator(ctx, eps, tau, np.conj(z))
    Mz = m_operator(ctx, eps, tau, z)
    correction = S_z @ scipy.linalg.solve(Mz, solution_adjoint(ctx, S_zbar, Mf))
    return R0 - correction


def soft_decoupled_resolvent(ctx, tau, z):
    """Dirichlet resolvent of the soft component on its local dofs."""
    verts, _, pi = component_dofs(ctx, SOFT)
    K = ctx.region_stiffness(SOFT, tau)
    M = ctx.region_mass(SOFT, tau)
    out = np.zeros((len(verts), len(verts)), dtype=complex)
    out[np.ix_(pi, np.arange(len(verts)))] = lu_solver(
        (K - z * M)[np.ix_(pi, pi)]
    )(M[pi, :])
    return out


def generalized_resolvent_soft(ctx, eps, tau, z, via="triple"):
    """Compression of the fibre resolvent to the soft component.

    via="triple": (A0^soft - z)^-1 - S^soft(z) M(z)^-1 S^soft(zbar)^*, with
    M(z) the full weighted M-operator (stiff + soft DtN sum).
    via="direct": compress the assembled resolvent, pairing the input against
    the soft mass and restricting the output to the soft dofs.

    Both return a matrix on the soft component's local dofs; the two
    constructions agree to machine precision.
    """
    verts, _, _ = component_dofs(ctx, SOFT)
    if via == "direct":
        A, Mf = ctx.direct_operator(tau, eps)
        Msoft = ctx.region_mass(SOFT, tau)
        rhs = np.zeros((ctx.nfree, len(verts)), dtype=complex)
        rhs[verts, :] = Msoft
        full = lu_solver(A - z * Mf)(rhs)
        return full[verts, :]
    if via != "triple":
        raise ValueError(f"unknown assembly path {via!r}")
    Msoft = ctx.region_mass(SOFT, tau)
    R0 = soft_decoupled_resolvent(ctx, tau, z)
    S_z = solution_operator(ctx, SOFT, tau, z)
    S_zbar = solution_operator(ctx, SOFT, tau, np.conj(z))
    Mz = m_operator(ctx, eps, tau, z)
    B = boundary_gram(ctx)
    adj = scipy.linalg.solve(B, S_zbar.conj().T @ Msoft)
    return R0 - S_z @ scipy.linalg.solve(Mz, adj)


__all__ = [
    "BlockM",
    "adapted_basis",
    "block_decompose",
    "invert_m",
    "solution_adjoint",
    "direct_resolvent",
    "resolvent_krein",
    "soft_decoupled_resolvent",
    "generalized_resolvent_soft",
]
