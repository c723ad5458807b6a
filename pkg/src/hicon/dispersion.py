"""Dispersion functions of the two stiff components.

The homogenized resolvent compressed to a single stiff coordinate acts as
multiplication by (K - z)^-1, where K(tau, z) is the dispersion function of
that component.  Both functions are assembled verbatim from their defining
displays: with v, w the soft lifts of the two Steklov vectors and

    arg_v = z (A0^soft - z)^-1 v + v = S^soft(z)(psi_1^int, 0),
    arg_w = z (A0^soft - z)^-1 w + w = S^soft(z)(0, psi_1^ls),

the building blocks are the four T-values

    t_iv = T_int(arg_v, ||Psi_int||, 0),   t_lv = T_ls(arg_v, ||Psi_int||, 0),
    t_iw = T_int(arg_w, 0, ||Psi_ls||),    t_lw = T_ls(arg_w, 0, ||Psi_ls||),

where T_* reads off the (minus, normalized) Steklov coefficient of the soft
boundary flux, plus the weighted eigenvalue term eps^-2 mu_1 carried by the
third slot.  Then

    K_int = t_iv / ||Psi_int||
            + [t_lv t_iw / (z ||Psi_int|| ||Psi_ls||)]
              / (1 - t_lw / (z ||Psi_ls||)),
    K_ls  = t_lw / ||Psi_ls||
            + [t_iw t_lv / (z ||Psi_int|| ||Psi_ls||)]
              / (1 - t_iv / (z ||Psi_int||)).

Only t_lw carries the weighted eigenvalue term (mu_1 of the stiff interior
vanishes identically), so K_int is eps-independent while K_ls depends on eps
through eps^-2 mu_1^ls whenever tau != 0; at tau = 0 that eigenvalue is zero
and K_ls is exactly eps-free.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .boundary_triple import (
    component_dofs,
    component_gram,
    harmonic_lift,
    solution_operator,
    spectral_projection,
)
from .errors import DenominatorVanishes
from .geometry import SOFT

DEN_FLOOR = 1e-8


def lifts_v_w(ctx, tau, sp=None):
    """Soft lifts of the two stiff Steklov vectors.

    v extends (psi_1^int, 0), w extends (0, psi_1^ls); both are
    tau-harmonic in the soft annulus.
    """
    if sp is None:
        sp = spectral_projection(ctx, tau)
    n = ctx.n_bnd
    e1 = np.zeros(2 * n, dtype=complex)
    e1[:n] = sp.psi1_int
    e2 = np.zeros(2 * n, dtype=complex)
    e2[n:] = sp.psi1_ls
    v = harmonic_lift(ctx, SOFT, tau, e1)
    w = harmonic_lift(ctx, SOFT, tau, e2)
    return v, w


def soft_flux(ctx, tau, u, source):
    """Boundary flux of a soft field with known interior source.

    For u with (weak) soft action f = source, the conormal data with the
    sign convention of the DtN maps is B^-1 (M f - K(tau) u) on the traces.
    """
    _, pg, _ = component_dofs(ctx, SOFT)
    K = ctx.region_stiffness(SOFT, tau)
    M = ctx.region_mass(SOFT, tau)
    resid = M @ source - K @ u
    return scipy.linalg.solve(component_gram(ctx, SOFT), resid[pg])


def t_operators(ctx, eps, tau, u, beta_int, beta_ls, source, sp=None):
    """The two stiff rows of the homogenized action on (u, beta, beta).

    Returns (T_int, T_ls): minus the normalized Steklov coefficients of the
    soft flux of u, with the weighted eigenvalue term eps^-2 mu_1 beta/||Psi||
    added on the stiff-landscape row (the stiff-interior eigenvalue is zero).
    """
    if sp is None:
        sp = spectral_projection(ctx, tau)
    n = ctx.n_bnd
    g = soft_flux(ctx, tau, u, source)
    c_int = complex(np.vdot(sp.psi1_int, ctx.B["int"] @ g[:n]))
    c_ls = complex(np.vdot(sp.psi1_ls, ctx.B["ls"] @ g[n:]))
    T_int = -c_int / sp.norm_int
    T_ls = -(c_ls + eps**-2 * sp.mu1_ls * beta_ls / sp.norm_ls) / sp.norm_ls
    return T_int, T_ls


@dataclass
class DispersionSample:
    """Dispersion data of both stiff components at one (tau, eps, z)."""

    tau: np.ndarray
    eps: float
    z: complex
    K_int: complex
    K_a_int: complex
    K_b_int: complex
    K_ls: complex
    K_a_ls: complex
    K_b_ls: complex
    norm_int: float
    norm_ls: float


def _t_values(ctx, eps, tau, z, sp):
    n = ctx.n_bnd
    S = solution_operator(ctx, SOFT, tau, z)
    e1 = np.zeros(2 * n, dtype=complex)
    e1[:n] = sp.psi1_int
    e2 = np.zeros(2 * n, dtype=complex)
    e2[n:] = sp.psi1_ls
    arg_v = S @ e1
    arg_w = S @ e2
    t_iv, t_lv = t_operators(
        ctx, eps, tau, arg_v, sp.norm_int, 0.0, z * arg_v, sp
    )
    t_iw, t_lw = t_operators(
        ctx, eps, tau, arg_w, 0.0, sp.norm_ls, z * arg_w, sp
    )
    return t_iv, t_lv, t_iw, t_lw


def dispersion_K_int(ctx, eps, tau, z, sp=None, den_floor=DEN_FLOOR):
    """Dispersion function of the stiff interior disc (K_a + K_b parts)."""
    tau = np.asarray(tau, dtype=float)
    if sp is None:
        sp = spectral_projection(ctx, tau)
    t_iv, t_lv, t_iw, t_lw = _t_values(ctx, eps, tau, z, sp)
    K_a = t_iv / sp.norm_int
    den = 1.0 - t_lw / (z * sp.norm_ls)
    if abs(den) < den_floor:
        raise DenominatorVanishes(
            f"stiff-int denominator |{den:.3e}| < {den_floor} at "
            f"tau={tuple(tau)}, eps={eps}, z={z}"
        )
    K_b = (t_lv * t_iw / (z * sp.norm_int * sp.norm_ls)) / den
    return K_a, K_b


def dispersion_K_ls(ctx, eps, tau, z, sp=None, den_floor=DEN_FLOOR):
    """Dispersion function of the stiff landscape (K_a + K_b parts)."""
    tau = np.asarray(tau, dtype=float)
    if sp is None:
        sp = spectral_projection(ctx, tau)
    t_iv, t_lv, t_iw, t_lw = _t_values(ctx, eps, tau, z, sp)
    K_a = t_lw / sp.norm_ls
    den = 1.0 - t_iv / (z * sp.norm_int)
    if abs(den) < den_floor:
        raise DenominatorVanishes(
            f"stiff-ls denominator |{den:.3e}| < {den_floor} at "
            f"tau={tuple(tau)}, eps={eps}, z={z}"
        )
    K_b = (t_iw * t_lv / (z * sp.norm_int * sp.norm_ls)) / den
    return K_a, K_b


def dispersion_sample(ctx, eps, tau, z, sp=None, den_floor=DEN_FLOOR):
    """Evaluate both dispersion functions at one (tau, eps, z)."""
    tau = np.asarray(tau, dtype=float)
    if sp is None:
        sp = spectral_projection(ctx, tau)
    Ka_i, Kb_i = dispersion_K_int(ctx, eps, tau, z, sp, den_floor)
    Ka_l, Kb_l = dispersion_K_ls(ctx, eps, tau, z, sp, den_floor)
    return DispersionSample(
        tau=tau,
        eps=float(eps),
        z=complex(z),
        K_int=Ka_i + Kb_i,
        K_a_int=Ka_i,
        K_b_int=Kb_i,
        K_ls=Ka_l + Kb_l,
        K_a_ls=Ka_l,
        K_b_ls=Kb_l,
        norm_int=sp.norm_int,
        norm_ls=sp.norm_ls,
    )


def k_ls_eps_spread(ctx, tau, z, eps_list, sp=None):
    """Evaluate K_ls across an eps list; returns (values, relative spread)."""
    tau = np.asarray(tau, dtype=float)
    if sp is None:
        sp = spectral_projection(ctx, tau)
    vals = []
    for eps in eps_list:
        Ka, Kb = dispersion_K_ls(ctx, eps, tau, z, sp)
        vals.append(Ka + Kb)
    vals = np.array(vals)
    scale = max(np.abs(vals).max(), 1e-300)
    spread = float(np.abs(vals - vals[0]).max() / scale)
    return vals, spread


__all__ = [
    "DEN_FLOOR",
    "lifts_v_w",
    "soft_flux",
    "t_operators",
    "DispersionSample",
    "dispersion_K_int",
    "dispersion_K_ls",
    "dispersion_sample",
    "k_ls_eps_spread",
]
