"""Acceptance gate: every headline property at its stated tolerance.

Each criterion prints one PASS/FAIL line (collected into the pytest terminal
summary) and asserts.  The default cell (64 interface segments, target mesh
size 0.05) is shared across criteria; heavier sweeps reuse cached spectral
data.
"""

import json

import numpy as np
import pytest
import scipy.linalg

from conftest import ACCEPTANCE_LINES
from hicon.asymptotics import alpha2, mu_star, steklov_expansion_rows
from hicon.boundary_triple import (
    boundary_gram,
    component_dofs,
    decoupled_resolvent,
    full_solution_operator,
    m_operator,
    solution_operator,
    spectral_projection,
    steklov_eigs,
)
from hicon.cli import main as cli_main
from hicon.dispersion import dispersion_sample, k_ls_eps_spread
from hicon.fem_assembly import (
    FibreContext,
    fibre_rescaling_check,
    weighted_operator_norm,
)
from hicon.geometry import SOFT, STIFF_INT, STIFF_LS, CellSpec, build_period_cell
from hicon.homogenized import norm_resolvent_distance, r_hom_full
from hicon.krein import (
    block_decompose,
    direct_resolvent,
    invert_m,
    resolvent_krein,
)

TAU = np.array([1.0, 0.5])
TAU_U = np.array([np.pi / 2, np.pi / 2])
Z = 1.0 + 1.0j
EPS = 0.125
EPS_GRID = [2.0**-k for k in range(2, 7)]
Z_LIST = [1.0 + 1.0j, 2.0 + 1.0j, 0.5 + 2.0j, -1.0 + 1.0j]


def report(num, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def ctx():
    return FibreContext(build_period_cell(CellSpec()))


@pytest.fixture(scope="module")
def sp(ctx):
    return spectral_projection(ctx, TAU)


def test_criterion_01_krein_oracle(ctx):
    worst = 0.0
    for tau in (TAU, TAU_U):
        Mf = ctx.mass_full(tau)
        for eps in (0.25, 0.0625, 0.015625):
            for z in Z_LIST:
                Rk = resolvent_krein(ctx, eps, tau, z)
                Rd = direct_resolvent(ctx, eps, tau, z)
                rel = weighted_operator_norm(
                    Rk - Rd, Mf, Mf
                ) / weighted_operator_norm(Rd, Mf, Mf)
                worst = max(worst, rel)
    report(
        1,
        worst <= 1e-8,
        f"resolvent formula vs direct solve, max relative gap "
        f"{worst:.3e} (tol 1e-8) over 24 (tau, eps, z) samples",
    )


def test_criterion_02_triple_identities(ctx):
    zeta = 0.5 + 2.0j
    B = boundary_gram(ctx)
    Mf = ctx.mass_full(TAU)
    n = ctx.n_bnd
    errs = {}

    # S(0) = Pi (componentwise lifts) and Gamma_0 S(z) = I
    Pi = full_solution_operator(ctx, EPS, TAU, 0.0)
    lift = np.zeros_like(Pi)
    for region, cols in (
        (STIFF_INT, np.arange(n)),
        (STIFF_LS, np.arange(n, 2 * n)),
        (SOFT, np.arange(2 * n)),
    ):
        S0 = solution_operator(ctx, region, TAU, 0.0)
        lift[np.ix_(ctx.regions[region].verts, cols)] = S0
    errs["S(0)=Pi"] = np.abs(Pi - lift).max() / np.abs(Pi).max()
    S_z = full_solution_operator(ctx, EPS, TAU, Z)
    tr = np.concatenate([ctx.trace["int"], ctx.trace["ls"]])
    errs["Gamma0 S=I"] = np.abs(S_z[tr, :] - np.eye(2 * n)).max()

    # M(0) = Lambda, the weighted DtN sum
    from hicon.boundary_triple import dtn_matrix

    sigma = np.zeros((2 * n, 2 * n), dtype=complex)
    sigma[:n, :n] += EPS**-2 * dtn_matrix(ctx, STIFF_INT, TAU, 0.0)[0]
    sigma[n:, n:] += EPS**-2 * dtn_matrix(ctx, STIFF_LS, TAU, 0.0)[0]
    sigma += dtn_matrix(ctx, SOFT, TAU, 0.0)[0]
    lam = -scipy.linalg.solve(B, sigma)
    M0 = m_operator(ctx, EPS, TAU, 0.0)
    errs["M(0)=Lambda"] = np.abs(M0 - lam).max() / np.abs(lam).max()

    # M(z)^* = M(zbar)
    Mz = m_operator(ctx, EPS, TAU, Z)
    Mzbar = m_operator(ctx, EPS, TAU, np.conj(Z))
    adj = scipy.linalg.solve(B, Mz.conj().T @ B)
    errs["M(z)*=M(zbar)"] = np.abs(adj - Mzbar).max() / np.abs(Mz).max()

    # M(z) - M(zeta) = (z - zeta) S(zbar)^* S(zeta)
    Mzeta = m_operator(ctx, EPS, TAU, zeta)
    S_zbar = full_solution_operator(ctx, EPS, TAU, np.conj(Z))
    S_zeta = full_solution_operator(ctx, EPS, TAU, zeta)
    rhs = (Z - zeta) * scipy.linalg.solve(B, S_zbar.conj().T @ Mf @ S_zeta)
    errs["resolvent diff"] = np.abs((Mz - Mzeta) - rhs).max() / np.abs(Mz).max()

    # Im M(z) = (Im z) S(zbar)^* S(zbar)
    im = (Mz - adj) / 2j
    rhs_im = np.imag(Z) * scipy.linalg.solve(B, S_zbar.conj().T @ Mf @ S_zbar)
    errs["Im M"] = np.abs(im - rhs_im).max() / np.abs(im).max()

    # Green's identity + flux reconstruction on 32 seeded probes
    A, _ = ctx.direct_operator(TAU, EPS)
    R0 = decoupled_resolvent(ctx, EPS, TAU, 0.0)
    Lam = m_operator(ctx, EPS, TAU, 0.0)
    Pi_star = scipy.linalg.solve(B, Pi.conj().T @ Mf)
    rng = np.random.default_rng(0x5EED)
    worst_green = 0.0
    probes = []
    for _ in range(32):
        f = rng.standard_normal(ctx.nfree) + 1j * rng.standard_normal(ctx.nfree)
        phi = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
        u = R0 @ f + Pi @ phi
        g1 = Pi_star @ f + Lam @ phi
        g1_alt = scipy.linalg.solve(B, (Mf @ f - A @ u)[tr])
        worst_green = max(
            worst_green, np.abs(g1 - g1_alt).max() / np.abs(g1).max()
        )
        probes.append((f, phi, u, g1))
    for (f_u, phi_u, u, g1_u), (f_v, phi_v, v, g1_v) in zip(
        probes[::2], probes[1::2]
    ):
        lhs = np.vdot(v, Mf @ f_u) - np.vdot(f_v, Mf @ u)
        rhs_g = np.vdot(phi_v, B @ g1_u) - np.vdot(g1_v, B @ phi_u)
        mag = abs(np.vdot(v, Mf @ f_u)) + abs(np.vdot(phi_v, B @ g1_u))
        worst_green = max(worst_green, abs(lhs - rhs_g) / mag)
    errs["Green"] = worst_green

    worst = max(errs.values())
    report(
        2,
        worst <= 1e-8,
        "triple identities (lift, trace, DtN sum, adjoint symmetry, "
        f"resolvent difference, Im part, Green probes), max residual "
        f"{worst:.3e} (tol 1e-8)",
    )


def test_criterion_03_steklov_facts(ctx):
    ok = True
    details = []
    for tau in (np.zeros(2), TAU, TAU_U):
        mu, psi = steklov_eigs(ctx, STIFF_INT, tau, k=1)
        ok &= abs(mu[0]) <= 1e-8
        _, pg, _ = component_dofs(ctx, STIFF_INT)
        B = ctx.B["int"]
        wave = np.exp(-1j * (ctx.coords[ctx.regions[STIFF_INT].verts[pg]] @ tau))
        wave = wave / np.sqrt(np.vdot(wave, B @ wave).real)
        ang = np.arccos(min(1.0, abs(np.vdot(wave, B @ psi[:, 0]))))
        ok &= ang <= 1e-3
        details.append(f"angle {ang:.1e}")
    mu0, _ = steklov_eigs(ctx, STIFF_LS, np.zeros(2), k=1)
    ok &= abs(mu0[0]) <= 1e-8
    for tau in (TAU, TAU_U, np.array([0.3, 0.0])):
        mu_t, _ = steklov_eigs(ctx, STIFF_LS, tau, k=1)
        ok &= mu_t[0] < 0.0
    mu_d, _ = steklov_eigs(ctx, STIFF_INT, np.zeros(2), k=2)
    rel = abs(mu_d[1] - (-5.0)) / 5.0
    ok &= rel <= 0.02
    report(
        3,
        ok,
        "Steklov facts: plane-wave eigenpair exact on the disc "
        f"({', '.join(details)}), landscape eigenvalue 0 at origin and "
        f"negative off it, disc DtN mu2 within {rel:.1%} of -1/r_in (tol 2%)",
    )


def test_criterion_04_m_inverse_asymptotics(ctx, sp):
    B = boundary_gram(ctx)
    norm_Sinv, dist = [], []
    for eps in EPS_GRID:
        blocks = block_decompose(m_operator(ctx, eps, TAU, Z), sp, B)
        _, _, diag = invert_m(blocks)
        norm_Sinv.append(diag["norm_S_inv"])
        dist.append(diag["dist_Minv_diag"])
    logs = np.log(EPS_GRID)
    slope_S = float(np.polyfit(logs, np.log(norm_Sinv), 1)[0])
    slope_d = float(np.polyfit(logs, np.log(dist), 1)[0])
    # uniform boundedness of the projected head inverse, checked where the
    # weighted eigenvalue has saturated on the coarsest eps
    sp_u = spectral_projection(ctx, TAU_U)
    a_vals = []
    for eps in EPS_GRID:
        blocks = block_decompose(m_operator(ctx, eps, TAU_U, Z), sp_u, B)
        _, _, diag = invert_m(blocks)
        a_vals.append(diag["norm_A_inv"])
    ratio = max(a_vals) / min(a_vals)
    ok = 1.8 <= slope_S <= 2.2 and 1.8 <= slope_d <= 2.2 and ratio <= 3.0
    report(
        4,
        ok,
        f"M-inverse asymptotics: Schur inverse slope {slope_S:.3f}, "
        f"diagonal-distance slope {slope_d:.3f} (window [1.8, 2.2]), "
        f"head-inverse max/min ratio {ratio:.3f} (tol 3)",
    )


def test_criterion_05_homogenization_slope(ctx):
    ok = True
    parts = []
    for tau in (TAU, TAU_U):
        rows = norm_resolvent_distance(ctx, EPS_GRID, tau, Z)
        d = [r["distance"] for r in rows]
        s = rows[0]["slope_global"]
        ok &= 1.7 <= s <= 2.3
        ok &= all(a > b for a, b in zip(d, d[1:]))
        parts.append(f"slope {s:.3f} at tau=({tau[0]:.3f},{tau[1]:.3f})")
    report(
        5,
        ok,
        "norm-resolvent distance to the rank-two model: "
        + ", ".join(parts)
        + " (window [1.7, 2.3]), distances strictly decreasing",
    )


def test_criterion_06_self_adjointness(ctx, sp):
    hom = r_hom_full(ctx, EPS, TAU, Z, sp)
    hom_bar = r_hom_full(ctx, EPS, TAU, np.conj(Z), sp)
    Gm = hom.space_gram(ctx.region_mass(SOFT, TAU))
    adj = scipy.linalg.solve(Gm, hom.as_matrix().conj().T @ Gm)
    e_adj = np.abs(adj - hom_bar.as_matrix()).max() / np.abs(
        hom_bar.as_matrix()
    ).max()
    z2 = 0.5 + 2.0j
    R1 = hom.as_matrix()
    R2 = r_hom_full(ctx, EPS, TAU, z2, sp).as_matrix()
    lhs = R1 - R2
    e_pr = np.abs(lhs - (Z - z2) * (R1 @ R2)).max() / np.abs(lhs).max()
    ok = e_adj <= 1e-9 and e_pr <= 1e-8
    report(
        6,
        ok,
        f"homogenized resolvent structure: adjoint symmetry {e_adj:.3e} "
        f"(tol 1e-9), pseudoresolvent identity {e_pr:.3e} (tol 1e-8)",
    )


def test_criterion_07_dispersion_characterization(ctx):
    pts = -np.pi + 2.0 * np.pi * np.arange(3) / 3.0
    worst = 0.0
    for tx in pts:
        for ty in pts:
            tau = np.array([tx, ty])
            sp_t = spectral_projection(ctx, tau)
            s = dispersion_sample(ctx, EPS, tau, Z, sp_t)
            d = np.diag(r_hom_full(ctx, EPS, tau, Z, sp_t).stiff_block)
            worst = max(
                worst,
                abs(1.0 / (s.K_int - Z) - d[0]) / abs(d[0]),
                abs(1.0 / (s.K_ls - Z) - d[1]) / abs(d[1]),
            )
    sp_u = spectral_projection(ctx, TAU_U)
    kb = [
        abs(dispersion_sample(ctx, e, TAU_U, Z, sp_u).K_b_int) for e in EPS_GRID
    ]
    slope = float(np.polyfit(np.log(EPS_GRID), np.log(kb), 1)[0])
    _, spread = k_ls_eps_spread(ctx, np.zeros(2), Z, EPS_GRID)
    ok = worst <= 1e-7 and 1.8 <= slope <= 2.2 and spread <= 1e-10
    report(
        7,
        ok,
        f"dispersion functions: diagonal characterization gap {worst:.3e} "
        f"(tol 1e-7) on a 3x3 tau grid, correction slope {slope:.3f} "
        f"(window [1.8, 2.2]), landscape eps spread {spread:.3e} "
        f"(tol 1e-10)",
    )


def test_criterion_08_corrector_expansion(ctx):
    theta = np.array([1.0, 0.0])
    a2 = alpha2(ctx, theta)
    ev = np.linalg.eigvalsh(mu_star(ctx))
    rows = steklov_expansion_rows(ctx, theta, [0.05, 0.1, 0.25, 0.5])
    cubic = max(r["excess"] for r in rows)
    ratio = rows[1]["mu1_ls"] / rows[0]["mu1_ls"]
    ok = a2 > 0.0 and ev.max() < 0.0 and np.isfinite(cubic)
    ok &= abs(ratio - 4.0) <= 0.2
    report(
        8,
        ok,
        f"Steklov expansion: alpha2 = {a2:.6f} > 0, mu* negative definite, "
        f"cubic remainder constant {cubic:.3e} over |tau| <= 0.5, "
        f"quadratic ratio {ratio:.4f} (within 5% of 4 at |tau| = 0.05)",
    )


def test_criterion_09_rescaling(ctx):
    worst = 0.0
    for eps in (0.25, 0.125):
        ev_u, ev_s = fibre_rescaling_check(ctx.mesh, TAU, eps, nev=5)
        rel = np.abs(ev_u - ev_s) / np.maximum(np.abs(ev_s), 1.0)
        worst = max(worst, float(rel.max()))
    report(
        9,
        worst <= 1e-8,
        f"unit-cell vs rescaled-cell fibre, lowest-5 eigenvalue gap "
        f"{worst:.3e} (tol 1e-8)",
    )


def test_criterion_10_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_bnd": 16, "h": 0.12, "tau_grid_n": 3}))
    blobs = []
    for d in ("r1", "r2"):
        code = cli_main(
            ["dispersion", "--config", str(cfg), "--out", str(tmp_path / d)]
        )
        assert code == 0
        blobs.append((tmp_path / d / "dispersion.csv").read_bytes())
    ok = blobs[0] == blobs[1]
    report(
        10,
        ok,
        f"repeated experiment runs: CSV byte-identical = {ok} "
        f"({len(blobs[0])} bytes)",
    )
