"""Tests for the Dirichlet decoupling, lifts, DtN maps and the M-operator."""

import numpy as np
import pytest
import scipy.linalg

from hicon.boundary_triple import (
    boundary_gram,
    component_dofs,
    decoupled_resolvent,
    dtn_matrix,
    full_solution_operator,
    harmonic_lift,
    m_operator,
    solution_operator,
    spectral_projection,
    steklov_eigs,
)
from hicon.fem_assembly import FibreContext, weighted_adjoint
from hicon.geometry import SOFT, STIFF_INT, STIFF_LS, CellSpec, build_period_cell

TAU = np.array([1.0, 0.5])
Z = 1.0 + 1.0j
EPS = 0.125


@pytest.fixture(scope="module")
def ctx():
    return FibreContext(build_period_cell(CellSpec()))


def test_lift_of_plane_wave_on_disc(ctx):
    tau = np.array([np.pi / 2, np.pi / 2])
    verts = ctx.regions[STIFF_INT].verts
    wave = np.exp(-1j * (ctx.coords[verts] @ tau))
    _, pg, _ = component_dofs(ctx, STIFF_INT)
    u = harmonic_lift(ctx, STIFF_INT, tau, wave[pg])
    assert np.abs(u - wave).max() < 1e-10


def test_lift_log_profile_on_annulus(ctx):
    _, pg, pi = component_dofs(ctx, SOFT)
    n = ctx.n_bnd
    data = np.zeros(2 * n)
    data[:n] = 1.0  # 1 on the inner interface, 0 on the outer
    u = harmonic_lift(ctx, SOFT, np.zeros(2), data)
    xy = ctx.coords[ctx.regions[SOFT].verts] - 0.5
    r = np.hypot(xy[:, 0], xy[:, 1])
    exact = np.log(r / 0.35) / np.log(0.2 / 0.35)
    assert np.abs(u[pi] - exact[pi]).max() < 1e-2
    assert np.abs(u.imag).max() < 1e-12


def test_lift_constant_on_landscape(ctx):
    n = ctx.n_bnd
    u = harmonic_lift(ctx, STIFF_LS, np.zeros(2), np.ones(n))
    assert np.abs(u - 1.0).max() < 1e-10


def test_dtn_schur_hermitian_real_shift(ctx):
    for region in (STIFF_INT, SOFT, STIFF_LS):
        for z in (0.0, -0.7):
            schur, _ = dtn_matrix(ctx, region, TAU, z)
            assert np.abs(schur - schur.conj().T).max() < 1e-10


def test_disc_dtn_spectrum(ctx):
    # separation of variables on a disc of radius r: DtN eigenvalues -k/r,
    # each nonzero one twice
    mu, _ = steklov_eigs(ctx, STIFF_INT, np.zeros(2), k=5)
    assert abs(mu[0]) < 1e-10
    assert np.allclose(mu[1:3], -5.0, rtol=2e-2)
    assert np.allclose(mu[3:5], -10.0, rtol=3e-2)


def test_annulus_capacitor_energy(ctx):
    schur, _ = dtn_matrix(ctx, SOFT, np.zeros(2), 0.0)
    n = ctx.n_bnd
    phi = np.zeros(2 * n)
    phi[:n] = 1.0
    q = float((phi @ schur @ phi).real)
    assert abs(q - 2 * np.pi / np.log(0.35 / 0.2)) < 2e-2 * q


def test_steklov_first_pairs(ctx):
    for tau in (np.zeros(2), TAU, np.array([np.pi / 2, np.pi / 2])):
        mu, psi = steklov_eigs(ctx, STIFF_INT, tau, k=2)
        assert abs(mu[0]) < 1e-8
        # first eigenvector aligned with the trace of the plane wave
        _, pg, _ = component_dofs(ctx, STIFF_INT)
        B = ctx.B["int"]
        wave = np.exp(-1j * (ctx.coords[ctx.regions[STIFF_INT].verts[pg]] @ tau))
        wave = wave / np.sqrt(np.vdot(wave, B @ wave).real)
        cosang = abs(np.vdot(wave, B @ psi[:, 0]))
        assert np.arccos(min(1.0, cosang)) <= 1e-3
    mu0, psi0 = steklov_eigs(ctx, STIFF_LS, np.zeros(2), k=2)
    assert abs(mu0[0]) < 1e-8
    assert np.abs(psi0[:, 0] - psi0[0, 0]).max() < 1e-8
    mu_t, _ = steklov_eigs(ctx, STIFF_LS, np.array([0.3, 0.0]), k=1)
    assert -0.1 < mu_t[0] < -1e-4


def test_steklov_descending_and_semibounded(ctx):
    for region in (STIFF_INT, SOFT, STIFF_LS):
        mu, psi = steklov_eigs(ctx, region, TAU)
        assert np.all(np.diff(mu) <= 1e-12)
        assert mu[0] <= 1e-8
        B = dtn_matrix(ctx, region, TAU)[1]
        G = psi.conj().T @ B @ psi
        assert np.abs(G - np.eye(G.shape[0])).max() < 1e-8


def test_solution_operator_contracts(ctx):
    for region in (STIFF_INT, SOFT, STIFF_LS):
        S0 = solution_operator(ctx, region, TAU, 0.0)
        _, pg, _ = component_dofs(ctx, region)
        # strong Dirichlet data: trace of every column is the basis vector
        assert np.abs(S0[pg, :] - np.eye(len(pg))).max() == 0.0
        phi = np.exp(1j * np.arange(len(pg)))
        assert np.allclose(S0 @ phi, harmonic_lift(ctx, region, TAU, phi), atol=1e-12)


def test_stiff_solution_operator_eps_slope(ctx):
    # shifted stiff lifts approach the unshifted lift at rate eps^2
    eps_grid = [2.0**-k for k in range(2, 7)]
    B = ctx.B["int"]
    Mreg = ctx.region_mass(STIFF_INT, TAU)
    Pi = solution_operator(ctx, STIFF_INT, TAU, 0.0)
    dists = []
    for eps in eps_grid:
        S = solution_operator(ctx, STIFF_INT, TAU, eps**2 * Z)
        d = S - Pi
        dists.append(np.sqrt(np.abs(np.trace(d.conj().T @ Mreg @ d))))
    slope = np.polyfit(np.log(eps_grid), np.log(dists), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_m_operator_zero_shift_is_dtn_sum(ctx):
    M0 = m_operator(ctx, EPS, TAU, 0.0)
    n = ctx.n_bnd
    B = boundary_gram(ctx)
    sigma = np.zeros((2 * n, 2 * n), dtype=complex)
    sigma[:n, :n] += EPS**-2 * dtn_matrix(ctx, STIFF_INT, TAU, 0.0)[0]
    sigma[n:, n:] += EPS**-2 * dtn_matrix(ctx, STIFF_LS, TAU, 0.0)[0]
    sigma += dtn_matrix(ctx, SOFT, TAU, 0.0)[0]
    lam = -scipy.linalg.solve(B, sigma)
    assert np.abs(M0 - lam).max() < 1e-10 * np.abs(lam).max()


def test_m_operator_adjoint_symmetry(ctx):
    B = boundary_gram(ctx)
    Mz = m_operator(ctx, EPS, TAU, Z)
    Mzbar = m_operator(ctx, EPS, TAU, np.conj(Z))
    lhs = scipy.linalg.solve(B, Mz.conj().T @ B)
    assert np.abs(lhs - Mzbar).max() < 1e-9 * np.abs(Mz).max()


def test_m_operator_resolvent_identity(ctx):
    # M(z) - M(zeta) = (z - zeta) S(zbar)^* S(zeta) in the weighted adjoints
    zeta = 0.5 + 2.0j
    B = boundary_gram(ctx)
    Mf = ctx.mass_full(TAU)
    Mz = m_operator(ctx, EPS, TAU, Z)
    Mzeta = m_operator(ctx, EPS, TAU, zeta)
    S_zbar = full_solution_operator(ctx, EPS, TAU, np.conj(Z))
    S_zeta = full_solution_operator(ctx, EPS, TAU, zeta)
    rhs = (Z - zeta) * scipy.linalg.solve(B, S_zbar.conj().T @ Mf @ S_zeta)
    scale = np.abs(Mz).max()
    assert np.abs((Mz - Mzeta) - rhs).max() < 1e-8 * scale


def test_m_operator_imaginary_part(ctx):
    B = boundary_gram(ctx)
    Mf = ctx.mass_full(TAU)
    Mz = m_operator(ctx, EPS, TAU, Z)
    Mz_star = scipy.linalg.solve(B, Mz.conj().T @ B)
    im = (Mz - Mz_star) / 2j
    S_zbar = full_solution_operator(ctx, EPS, TAU, np.conj(Z))
    rhs = np.imag(Z) * scipy.linalg.solve(B, S_zbar.conj().T @ Mf @ S_zbar)
    assert np.abs(im - rhs).max() < 1e-8 * np.abs(im).max()


def test_decoupled_resolvent_equations(ctx):
    z = Z
    R0 = decoupled_resolvent(ctx, EPS, TAU, z)
    A, Mf = ctx.direct_operator(TAU, EPS)
    rng = np.random.default_rng(0x5EED)
    f = rng.standard_normal(ctx.nfree) + 1j * rng.standard_normal(ctx.nfree)
    u = R0 @ f
    n = ctx.n_bnd
    tr = np.concatenate([ctx.trace["int"], ctx.trace["ls"]])
    assert np.abs(u[tr]).max() == 0.0
    resid = (A - z * Mf) @ u - Mf @ f
    mask = np.ones(ctx.nfree, dtype=bool)
    mask[tr] = False
    assert np.abs(resid[mask]).max() < 1e-8 * np.abs(Mf @ f).max()


def test_greens_identity_and_flux_maps(ctx):
    # flux reconstruction: Gamma_1 u = B^-1 (M f - K_w u) on the traces for
    # u = A0^-1 f + Pi phi with A u = f, Gamma_0 u = phi
    z = 0.0
    A, Mf = ctx.direct_operator(TAU, EPS)
    B = boundary_gram(ctx)
    n = ctx.n_bnd
    tr = np.concatenate([ctx.trace["int"], ctx.trace["ls"]])
    R0 = decoupled_resolvent(ctx, EPS, TAU, z)
    Pi = full_solution_operator(ctx, EPS, TAU, 0.0)
    Lam = m_operator(ctx, EPS, TAU, 0.0)
    Pi_star = scipy.linalg.solve(B, Pi.conj().T @ Mf)

    rng = np.random.default_rng(1)

    def sample():
        f = rng.standard_normal(ctx.nfree) + 1j * rng.standard_normal(ctx.nfree)
        phi = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
        u = R0 @ f + Pi @ phi
        g1 = Pi_star @ f + Lam @ phi
        # independent flux reconstruction from the assembled matrices
        g1_alt = scipy.linalg.solve(B, (Mf @ f - A @ u)[tr])
        return f, phi, u, g1, g1_alt

    f_u, phi_u, u, g1_u, alt_u = sample()
    f_v, phi_v, v, g1_v, alt_v = sample()
    scale = np.abs(g1_u).max()
    assert np.abs(g1_u - alt_u).max() < 1e-9 * scale
    lhs = np.vdot(v, Mf @ f_u) - np.vdot(f_v, Mf @ u)
    rhs = np.vdot(phi_v, B @ g1_u) - np.vdot(g1_v, B @ phi_u)
    mag = abs(np.vdot(v, Mf @ f_u)) + abs(np.vdot(phi_v, B @ g1_u))
    assert abs(lhs - rhs) < 1e-8 * mag


def test_spectral_projection_structure(ctx):
    sp = spectral_projection(ctx, TAU)
    n = ctx.n_bnd
    B = boundary_gram(ctx)
    P = sp.projector(B)
    assert np.abs(P @ P - P).max() < 1e-12
    # B-self-adjoint: B P = P^H B
    assert np.abs(B @ P - P.conj().T @ B).max() < 1e-12
    assert np.linalg.matrix_rank(P, tol=1e-8) == 2
    assert sp.mu1_int == 0.0
    assert sp.mu1_ls < 0.0
    assert sp.norm_int > 0.0 and sp.norm_ls > 0.0
    # phase invariance
    sp2 = spectral_projection(ctx, TAU)
    sp2.psi1_int = np.exp(0.7j) * sp2.psi1_int
    P2 = sp2.projector(B)
    assert np.abs(P2 - P).max() < 1e-10


def test_lift_norms_match_plane_wave_and_constant(ctx):
    # ||Psi1_int|| = ||e^{-i tau x}|| / sqrt(|Gamma_int|) ~ sqrt(area)/sqrt(len)
    sp = spectral_projection(ctx, TAU)
    mesh = ctx.mesh
    a_int = mesh.region_area(STIFF_INT)
    l_int = mesh.interface_length("int")
    # the nodal interpolant of the plane wave has unit modulus only at the
    # vertices, so the discrete mass norm differs at O(h^2 |tau|^2)
    assert abs(sp.norm_int - np.sqrt(a_int / l_int)) < 1e-4
    sp0 = spectral_projection(ctx, np.zeros(2))
    a_ls = mesh.region_area(STIFF_LS)
    l_ls = mesh.interface_length("ls")
    assert abs(sp0.norm_ls - np.sqrt(a_ls / l_ls)) < 1e-8
