"""The rank-two homogenized resolvent and its distance to the fibre resolvent.

The homogenized operator acts on L^2(soft) (+) C^2, where the two extra
coordinates represent the stiff regions through the lifts Psi_1 of the first
Steklov eigenvectors (the isomorphism j identifies a stiff field a Psi_1 with
the coordinate beta = a ||Psi_1||; this module works in the un-normalized
coefficient a and carries the Gram G = diag(||Psi_1^int||^2, ||Psi_1^ls||^2)).

Its resolvent has the block form

    [ R(z)                    -S(z) br(z)^-1 G      ]
    [ -br(z)^-1 S(zbar)^*     -br(z)^-1 G           ]

with the rank-two bracket br(z) = Lambda_eps + z G + m(z), where
Lambda_eps = diag(0, eps^-2 mu_1^ls) holds the weighted first Steklov
eigenvalues, m(z) is the 2x2 compression of the soft M-operator onto the two
Steklov vectors, S(z) is the soft solution operator restricted to their span
and R(z) = (A0^soft - z)^-1 - S(z) br(z)^-1 S(zbar)^* is the soft block.

The extension to the full cell embeds the C^2 coordinates through the Psi_1
columns and annihilates their mass-orthogonal complements inside the stiff
regions; the norm-resolvent distance to the true fibre resolvent is measured
in the mass-weighted operator norm over the free degrees of freedom.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .boundary_triple import (
    component_dofs,
    solution_operator,
    spectral_projection,
)
from .errors import BracketSingular
from .fem_assembly import weighted_operator_norm
from .geometry import SOFT, STIFF_INT, STIFF_LS
from .krein import resolvent_krein, soft_decoupled_resolvent


def psi_embed(sp, n_bnd):
    """Columns (psi1_int (+) 0), (0 (+) psi1_ls) of the boundary space."""
    return sp.basis(n_bnd)


def soft_m_compressed(ctx, tau, z, sp):
    """2x2 compression of the soft M-operator onto the Steklov vectors.

    m_ij = <M^soft(z) e_j, e_i>_B = -e_i^H Schur_soft(z) e_j, with e_1, e_2
    the embedded Steklov vectors (B-orthonormal).
    """
    from .boundary_triple import _lift_and_schur

    _, schur = _lift_and_schur(ctx, SOFT, tau, z)
    E2 = psi_embed(sp, ctx.n_bnd)
    return -E2.conj().T @ schur @ E2


def stiff_gram(sp):
    """Gram Pi^* Pi of the two stiff lifts (they live in disjoint regions)."""
    return np.diag([sp.norm_int**2, sp.norm_ls**2]).astype(complex)


def bracket(ctx, eps, tau, z, sp):
    """The rank-two bracket br(z) = Lambda_eps + z G + m(z)."""
    lam = np.diag([sp.mu1_int * eps**-2, sp.mu1_ls * eps**-2]).astype(complex)
    return lam + z * stiff_gram(sp) + soft_m_compressed(ctx, tau, z, sp)


def _bracket_inv(br):
    try:
        inv = scipy.linalg.inv(br)
    except scipy.linalg.LinAlgError as exc:
        raise BracketSingular(f"rank-two bracket is singular: {exc}") from exc
    if not np.all(np.isfinite(inv)):
        raise BracketSingular("rank-two bracket is singular")
    return inv


def _breve_pieces(ctx, eps, tau, z, sp):
    """Shared ingredients: S(z), S(zbar)^*, br(z)^-1 on the soft component."""
    E2 = psi_embed(sp, ctx.n_bnd)
    Msoft = ctx.region_mass(SOFT, tau)
    S_z = solution_operator(ctx, SOFT, tau, z) @ E2
    S_zbar = solution_operator(ctx, SOFT, tau, np.conj(z)) @ E2
    S_zbar_adj = S_zbar.conj().T @ Msoft  # E2 columns are B-orthonormal
    br_inv = _bracket_inv(bracket(ctx, eps, tau, z, sp))
    return S_z, S_zbar_adj, br_inv


def r_hom_soft(ctx, eps, tau, z, sp=None):
    """Soft block of the homogenized resolvent."""
    if sp is None:
        sp = spectral_projection(ctx, tau)
    S_z, S_zbar_adj, br_inv = _breve_pieces(ctx, eps, tau, z, sp)
    R0 = soft_decoupled_resolvent(ctx, tau, z)
    return R0 - S_z @ br_inv @ S_zbar_adj


@dataclass
class HomResolvent:
    """Homogenized resolvent on L^2(soft) (+) C^2 (stiff lift coordinates).

    soft_block: matrix on the soft component's local dofs;
    soft_from_stiff: soft x 2; stiff_from_soft: 2 x soft; stiff_block: 2x2;
    embed_int, embed_ls: the lift columns Psi_1; gram_stiff: the 2x2 Gram G.
    """

    z: complex
    soft_block: np.ndarray
    soft_from_stiff: np.ndarray
    stiff_from_soft: np.ndarray
    stiff_block: np.ndarray
    embed_int: np.ndarray
    embed_ls: np.ndarray
    gram_stiff: np.ndarray

    def as_matrix(self):
        """The four blocks as one matrix on soft dofs (+) C^2."""
        return np.block(
            [
                [self.soft_block, self.soft_from_stiff],
                [self.stiff_from_soft, self.stiff_block],
            ]
        )

    def space_gram(self, Msoft):
        """Gram of the model space L^2(soft) (+) (C^2, G)."""
        return scipy.linalg.block_diag(Msoft, self.gram_stiff)


def r_hom_full(ctx, eps, tau, z, sp=None):
    """Homogenized resolvent with its rank-two stiff coupling blocks."""
    if sp is None:
        sp = spectral_projection(ctx, tau)
    S_z, S_zbar_adj, br_inv = _breve_pieces(ctx, eps, tau, z, sp)
    R0 = soft_decoupled_resolvent(ctx, tau, z)
    G = stiff_gram(sp)
    return HomResolvent(
        z=z,
        soft_block=R0 - S_z @ br_inv @ S_zbar_adj,
        soft_from_stiff=-S_z @ br_inv @ G,
        stiff_from_soft=-br_inv @ S_zbar_adj,
        stiff_block=-br_inv @ G,
        embed_int=sp.Psi1_int,
        embed_ls=sp.Psi1_ls,
        gram_stiff=G,
    )


def broken_maps(ctx, tau):
    """Embedding of free-dof functions into the broken (per-region) space.

    Returns (iota, M_broken): iota duplicates the interface values so each
    region carries its own copy, and M_broken is the block-diagonal region
    mass; iota^H M_broken iota equals the full mass matrix exactly.
    """
    sizes = [len(ctx.regions[r].verts) for r in (SOFT, STIFF_INT, STIFF_LS)]
    iota = np.zeros((sum(sizes), ctx.nfree))
    offs = 0
    blocks = []
    for r in (SOFT, STIFF_INT, STIFF_LS):
        verts = ctx.regions[r].verts
        iota[offs + np.arange(len(verts)), verts] = 1.0
        blocks.append(ctx.region_mass(r, tau))
        offs += len(verts)
    return iota, scipy.linalg.block_diag(*blocks)


def extend_full(ctx, tau, hom):
    """Null-extension of the homogenized resolvent to the free-dof space.

    The C^2 coordinates are pushed into the stiff regions along the Psi_1
    columns; input stiff data is projected onto them (mass inner product),
    and the complements are annihilated.
    """
    iota, Mb = broken_maps(ctx, tau)
    ns = len(ctx.regions[SOFT].verts)
    ni = len(ctx.regions[STIFF_INT].verts)
    nl = len(ctx.regions[STIFF_LS].verts)
    nb = ns + ni + nl
    # J : L^2(soft) (+) C^2 -> broken space
    J = np.zeros((nb, ns + 2), dtype=complex)
    J[:ns, :ns] = np.eye(ns)
    J[ns : ns + ni, ns] = hom.embed_int
    J[ns + ni :, ns + 1] = hom.embed_ls
    # J^* = G_model^-1 J^H M_broken
    Msoft = ctx.region_mass(SOFT, tau)
    Gm = hom.space_gram(Msoft)
    J_star = scipy.linalg.solve(Gm, J.conj().T @ Mb)
    X = J @ hom.as_matrix() @ J_star  # operator on the broken space
    # pull back to the free dofs: iota^* = M_full^-1 iota^T M_broken
    Mf = ctx.mass_full(tau)
    iota_star = scipy.linalg.solve(Mf, iota.T @ Mb)
    return iota_star @ X @ iota


def norm_resolvent_distance(ctx, eps_list, tau, z):
    """Distance rows between the fibre resolvent and the homogenized one.

    Returns a list of dicts (eps, distance, slope_local) with local slopes
    between consecutive eps values, plus the global log-log slope under the
    key "slope_global" on every row.
    """
    tau = np.asarray(tau, dtype=float)
    sp = spectral_projection(ctx, tau)
    Mf = ctx.mass_full(tau)
    dists = []
    for eps in eps_list:
        R = resolvent_krein(ctx, eps, tau, z)
        E = extend_full(ctx, tau, r_hom_full(ctx, eps, tau, z, sp))
        dists.append(weighted_operator_norm(R - E, Mf, Mf))
    logs_e = np.log(np.asarray(eps_list, dtype=float))
    logs_d = np.log(np.asarray(dists))
    slope_global = float(np.polyfit(logs_e, logs_d, 1)[0])
    rows = []
    for k, (eps, d) in enumerate(zip(eps_list, dists)):
        if k == 0:
            local = np.nan
        else:
            local = float(
                (logs_d[k] - logs_d[k - 1]) / (logs_e[k] - logs_e[k - 1])
            )
        rows.append(
            {
                "eps": float(eps),
                "distance": float(d),
                "slope_local": local,
                "slope_global": slope_global,
            }
        )
    return rows


__all__ = [
    "psi_embed",
    "soft_m_compressed",
    "stiff_gram",
    "bracket",
    "r_hom_soft",
    "HomResolvent",
    "r_hom_full",
    "broken_maps",
    "extend_full",
    "norm_resolvent_distance",
]
