"""Reproducible experiment driver.

Usage: ``hicon EXPERIMENT [--config FILE] [--out DIR]`` with EXPERIMENT one of
mesh, steklov, oracle, mslope, homslope, dispersion, correctors, rescale.

Each experiment evaluates a sweep on the configured period cell, writes
``<experiment>.csv`` (deterministic, byte-identical across reruns) and a
``summary.json`` carrying metadata plus named pass/fail checks; the process
exits 0 iff every check in scope passes.  All tunable constants live in the
config file (TOML or JSON); unspecified keys fall back to the defaults below.
"""

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import alpha2, mu_star, steklov_expansion_rows
from .boundary_triple import (
    boundary_gram,
    m_operator,
    spectral_projection,
    steklov_eigs,
)
from .dispersion import dispersion_sample, k_ls_eps_spread
from .errors import ConfigError, DegenerateFit, DenominatorVanishes
from .fem_assembly import (
    FibreContext,
    fibre_rescaling_check,
    weighted_operator_norm,
)
from .geometry import (
    SOFT,
    STIFF_INT,
    STIFF_LS,
    CellSpec,
    build_period_cell,
)
from .homogenized import norm_resolvent_distance, r_hom_full
from .krein import (
    block_decompose,
    direct_resolvent,
    invert_m,
    resolvent_krein,
)

EXPERIMENTS = (
    "mesh",
    "steklov",
    "oracle",
    "mslope",
    "homslope",
    "dispersion",
    "correctors",
    "rescale",
)


@dataclass
class RunConfig:
    """Validated experiment configuration with all tunable constants."""

    n_bnd: int = 64
    h: float = 0.05
    r_in: float = 0.2
    r_out: float = 0.35
    eps_grid: list = field(
        default_factory=lambda: [2.0**-k for k in range(2, 7)]
    )
    tau: list = field(default_factory=lambda: [1.0, 0.5])
    tau_uniform: list = field(
        default_factory=lambda: [np.pi / 2, np.pi / 2]
    )
    tau_grid_n: int = 5
    z_list: list = field(
        default_factory=lambda: [[1.0, 1.0], [2.0, 1.0], [0.5, 2.0], [-1.0, 1.0]]
    )
    sigma: float = 0.5
    den_floor: float = 1e-8
    seed: int = 0x5EED
    n_probes: int = 32
    slope_window: list = field(default_factory=lambda: [1.8, 2.2])
    slope_window_wide: list = field(default_factory=lambda: [1.7, 2.3])
    tol_oracle: float = 1e-8
    tol_diag: float = 1e-7
    tol_spread: float = 1e-10
    tol_rescale: float = 1e-8
    experiments: list = field(default_factory=list)

    def validate(self):
        for re_z, im_z in self.z_list:
            if abs(im_z) < self.sigma:
                raise ConfigError(
                    f"z_list: point {re_z}+{im_z}j has |Im z| < sigma = "
                    f"{self.sigma}"
                )
        eps = list(self.eps_grid)
        if len(eps) < 4:
            raise ConfigError("eps_grid: need at least 4 points for slope fits")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps_grid: must be strictly decreasing")
        for name in self.experiments:
            if name not in EXPERIMENTS:
                raise ConfigError(f"experiments: unknown name {name!r}")
        return self

    def cell_spec(self):
        return CellSpec(
            n_bnd=self.n_bnd, h=self.h, r_in=self.r_in, r_out=self.r_out
        )

    def zs(self):
        return [complex(a, b) for a, b in self.z_list]

    def tau_grid(self):
        pts = -np.pi + 2.0 * np.pi * np.arange(self.tau_grid_n) / self.tau_grid_n
        return [np.array([tx, ty]) for tx in pts for ty in pts]

    def as_dict(self):
        return {
            k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in self.__dict__.items()
        }

    def digest(self):
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path=None, overrides=None):
    """Build a RunConfig from an optional TOML/JSON file plus overrides."""
    doc = {}
    if path is not None:
        text = Path(path).read_bytes()
        if str(path).endswith(".json"):
            doc = json.loads(text)
        else:
            doc = tomllib.loads(text.decode())
    if overrides:
        doc.update(overrides)
    known = set(RunConfig.__dataclass_fields__)
    bad = sorted(set(doc) - known)
    if bad:
        raise ConfigError(f"unknown config keys: {', '.join(bad)}")
    return RunConfig(**doc).validate()


def fit_slope(x, y):
    """Least-squares log-log fit; returns (slope, intercept, residual).

    The residual is the maximum absolute deviation in log y.  Raises
    DegenerateFit on fewer than 4 points, repeated abscissae or nonpositive
    data.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 4:
        raise DegenerateFit("slope fit needs at least 4 points")
    if len(np.unique(x)) != len(x):
        raise DegenerateFit("slope fit abscissae must be distinct")
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise DegenerateFit("slope fit requires positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.abs(ly - (slope * lx + intercept)).max())
    return float(slope), float(intercept), residual


# -- experiments -----------------------------------------------------------
# each returns (columns, rows, checks): rows are tuples of floats, checks are
# (name, passed, detail) triples


def _ctx(cfg):
    return FibreContext(build_period_cell(cfg.cell_spec()))


def run_mesh(cfg):
    mesh = build_period_cell(cfg.cell_spec())
    areas = {r: mesh.region_area(r) for r in (STIFF_INT, SOFT, STIFF_LS)}
    rows = [
        (
            float(len(mesh.vertices)),
            float(len(mesh.free_dofs)),
            float(len(mesh.triangles)),
            areas[STIFF_INT],
            areas[SOFT],
            areas[STIFF_LS],
            mesh.min_triangle_angle(),
        )
    ]
    cols = [
        "n_vertices",
        "n_free",
        "n_triangles",
        "area_int",
        "area_soft",
        "area_ls",
        "min_angle_deg",
    ]
    total = sum(areas.values())
    checks = [
        ("mesh_area_partition", abs(total - 1.0) < 1e-12, f"sum={total:.3e}"),
        (
            "mesh_min_angle",
            mesh.min_triangle_angle() > 15.0,
            f"{mesh.min_triangle_angle():.2f} deg",
        ),
    ]
    return cols, rows, checks


def run_steklov(cfg):
    ctx = _ctx(cfg)
    rows = []
    checks = []
    taus = [np.zeros(2), np.asarray(cfg.tau, dtype=float), np.asarray(cfg.tau_uniform, dtype=float)]
    for tau in taus:
        sp = spectral_projection(ctx, tau)
        rows.append((tau[0], tau[1], sp.mu1_int, sp.mu1_ls))
    checks.append(
        (
            "steklov_int_eigenvalue_zero",
            all(abs(r[2]) <= 1e-8 for r in rows),
            f"max |mu1_int| = {max(abs(r[2]) for r in rows):.3e}",
        )
    )
    checks.append(
        (
            "steklov_ls_zero_at_origin",
            abs(rows[0][3]) <= 1e-8,
            f"mu1_ls(0) = {rows[0][3]:.3e}",
        )
    )
    checks.append(
        (
            "steklov_ls_negative_off_origin",
            all(r[3] < 0.0 for r in rows[1:]),
            f"values {[f'{r[3]:.3e}' for r in rows[1:]]}",
        )
    )
    # disc Dirichlet-to-Neumann oracle: mu_2 = -1/r_in
    mu, _ = steklov_eigs(ctx, STIFF_INT, np.zeros(2), k=3)
    rel = abs(mu[1] - (-1.0 / cfg.r_in)) * cfg.r_in
    checks.append(
        ("steklov_disc_dtn_oracle", rel <= 0.02, f"mu2 = {mu[1]:.6f}, rel {rel:.3e}")
    )
    return ["tau_x", "tau_y", "mu1_int", "mu1_ls"], rows, checks


def run_oracle(cfg):
    ctx = _ctx(cfg)
    rows = []
    worst = 0.0
    taus = [np.asarray(cfg.tau, dtype=float), np.asarray(cfg.tau_uniform, dtype=float)]
    eps_list = [cfg.eps_grid[0], cfg.eps_grid[len(cfg.eps_grid) // 2], cfg.eps_grid[-1]]
    for tau in taus:
        Mf = ctx.mass_full(tau)
        for eps in eps_list:
            for z in cfg.zs():
                Rk = resolvent_krein(ctx, eps, tau, z)
                Rd = direct_resolvent(ctx, eps, tau, z)
                gap = weighted_operator_norm(Rk - Rd, Mf, Mf)
                ref = weighted_operator_norm(Rd, Mf, Mf)
                rel = gap / ref
                worst = max(worst, rel)
                rows.append((tau[0], tau[1], eps, z.real, z.imag, rel))
    checks = [
        (
            "krein_matches_direct",
            worst <= cfg.tol_oracle,
            f"max relative gap {worst:.3e}",
        )
    ]
    cols = ["tau_x", "tau_y", "eps", "re_z", "im_z", "rel_gap"]
    return cols, rows, checks


def run_mslope(cfg):
    ctx = _ctx(cfg)
    z = cfg.zs()[0]
    rows = []
    checks = []
    for tau in (np.asarray(cfg.tau, dtype=float), np.asarray(cfg.tau_uniform, dtype=float)):
        sp = spectral_projection(ctx, tau)
        diag_rows = []
        for eps in cfg.eps_grid:
            Mmat = m_operator(ctx, eps, tau, z)
            blocks = block_decompose(Mmat, sp, boundary_gram(ctx))
            _, _, diag = invert_m(blocks)
            diag_rows.append(diag)
            rows.append(
                (
                    tau[0],
                    tau[1],
                    eps,
                    diag["norm_A_inv"],
                    diag["norm_S_inv"],
                    diag["dist_Minv_diag"],
                )
            )
        s_s, _, _ = fit_slope(cfg.eps_grid, [d["norm_S_inv"] for d in diag_rows])
        s_d, _, _ = fit_slope(
            cfg.eps_grid, [d["dist_Minv_diag"] for d in diag_rows]
        )
        lo, hi = cfg.slope_window
        tag = f"tau=({tau[0]:.3f},{tau[1]:.3f})"
        checks.append(
            (f"schur_inverse_slope[{tag}]", lo <= s_s <= hi, f"slope {s_s:.3f}")
        )
        checks.append(
            (f"m_inverse_diag_slope[{tag}]", lo <= s_d <= hi, f"slope {s_d:.3f}")
        )
        a_vals = [d["norm_A_inv"] for d in diag_rows]
        ratio = max(a_vals) / min(a_vals)
        if np.allclose(tau, cfg.tau_uniform):
            checks.append(
                (
                    f"projected_block_bounded[{tag}]",
                    ratio <= 3.0,
                    f"max/min ratio {ratio:.3f}",
                )
            )
    cols = ["tau_x", "tau_y", "eps", "norm_A_inv", "norm_S_inv", "dist_Minv_diag"]
    return cols, rows, checks


def run_homslope(cfg):
    ctx = _ctx(cfg)
    z = cfg.zs()[0]
    rows = []
    checks = []
    lo, hi = cfg.slope_window_wide
    for tau in (np.asarray(cfg.tau, dtype=float), np.asarray(cfg.tau_uniform, dtype=float)):
        dist_rows = norm_resolvent_distance(ctx, cfg.eps_grid, tau, z)
        for r in dist_rows:
            rows.append(
                (
                    tau[0],
                    tau[1],
                    r["eps"],
                    r["distance"],
                    r["slope_local"],
                    r["slope_global"],
                )
            )
        tag = f"tau=({tau[0]:.3f},{tau[1]:.3f})"
        d = [r["distance"] for r in dist_rows]
        checks.append(
            (
                f"homogenization_slope[{tag}]",
                lo <= dist_rows[0]["slope_global"] <= hi,
                f"slope {dist_rows[0]['slope_global']:.3f}",
            )
        )
        checks.append(
            (
                f"distances_decreasing[{tag}]",
                all(a > b for a, b in zip(d, d[1:])),
                f"distances {[f'{v:.3e}' for v in d]}",
            )
        )
    cols = ["tau_x", "tau_y", "eps", "distance", "slope_local", "slope_global"]
    return cols, rows, checks


def run_dispersion(cfg):
    ctx = _ctx(cfg)
    z = cfg.zs()[0]
    eps = cfg.eps_grid[1]
    rows = []
    checks = []
    worst_diag = 0.0
    skipped = []
    for tau in cfg.tau_grid():
        sp = spectral_projection(ctx, tau)
        try:
            s = dispersion_sample(ctx, eps, tau, z, sp, cfg.den_floor)
        except DenominatorVanishes as exc:
            skipped.append(str(exc))
            continue
        hom = r_hom_full(ctx, eps, tau, z, sp)
        d = np.diag(hom.stiff_block)
        worst_diag = max(
            worst_diag,
            abs(1.0 / (s.K_int - z) - d[0]) / abs(d[0]),
            abs(1.0 / (s.K_ls - z) - d[1]) / abs(d[1]),
        )
        rows.append(
            (
                tau[0],
                tau[1],
                eps,
                z.real,
                z.imag,
                s.K_int.real,
                s.K_int.imag,
                s.K_b_int.real,
                s.K_b_int.imag,
                s.K_ls.real,
                s.K_ls.imag,
            )
        )
    checks.append(
        (
            "dispersion_diagonal_characterization",
            worst_diag <= cfg.tol_diag,
            f"max relative gap {worst_diag:.3e}; skipped {len(skipped)}",
        )
    )
    tau_u = np.asarray(cfg.tau_uniform, dtype=float)
    sp_u = spectral_projection(ctx, tau_u)
    kb = [
        abs(dispersion_sample(ctx, e, tau_u, z, sp_u, cfg.den_floor).K_b_int)
        for e in cfg.eps_grid
    ]
    slope, _, _ = fit_slope(cfg.eps_grid, kb)
    lo, hi = cfg.slope_window
    checks.append(
        ("dispersion_correction_slope", lo <= slope <= hi, f"slope {slope:.3f}")
    )
    _, spread = k_ls_eps_spread(ctx, np.zeros(2), z, cfg.eps_grid)
    checks.append(
        (
            "dispersion_k_ls_eps_free",
            spread <= cfg.tol_spread,
            f"relative spread {spread:.3e} at tau = 0",
        )
    )
    cols = [
        "tau_x",
        "tau_y",
        "eps",
        "re_z",
        "im_z",
        "re_K_int",
        "im_K_int",
        "re_K_b_int",
        "im_K_b_int",
        "re_K_ls",
        "im_K_ls",
    ]
    return cols, rows, checks


def run_correctors(cfg):
    ctx = _ctx(cfg)
    mat = mu_star(ctx)
    theta = np.array([1.0, 0.0])
    exp_rows = steklov_expansion_rows(ctx, theta, [0.05, 0.1, 0.2, 0.4])
    rows = [
        (r["t"], theta[0], theta[1], r["mu1_ls"], r["prediction"], r["excess"])
        for r in exp_rows
    ]
    a2 = alpha2(ctx, theta)
    ev = np.linalg.eigvalsh(mat)
    cubic = max(r["excess"] for r in exp_rows)
    ratio = exp_rows[1]["mu1_ls"] / exp_rows[0]["mu1_ls"]
    checks = [
        ("corrector_alpha2_positive", a2 > 0.0, f"alpha2 = {a2:.6f}"),
        (
            "corrector_mu_star_negative_definite",
            ev.max() < 0.0,
            f"eigenvalues {ev[0]:.6f}, {ev[1]:.6f}",
        ),
        (
            "corrector_cubic_remainder_bounded",
            cubic < 1.0,
            f"max |mu1 + alpha2 t^2| / t^3 = {cubic:.3e}",
        ),
        (
            "corrector_quadratic_ratio",
            abs(ratio - 4.0) <= 0.2,
            f"mu1(2t)/mu1(t) = {ratio:.4f} at t = 0.05",
        ),
    ]
    cols = ["t", "theta_x", "theta_y", "mu1_ls", "model", "remainder_over_t3"]
    return cols, rows, checks


def run_rescale(cfg):
    mesh = build_period_cell(cfg.cell_spec())
    theta = np.asarray(cfg.tau, dtype=float)
    rows = []
    worst = 0.0
    for eps in cfg.eps_grid[:2]:
        ev_u, ev_s = fibre_rescaling_check(mesh, theta, eps, nev=5)
        for k in range(5):
            rel = abs(ev_u[k] - ev_s[k]) / max(abs(ev_s[k]), 1.0)
            worst = max(worst, rel)
            rows.append((eps, float(k), ev_u[k], ev_s[k], rel))
    checks = [
        (
            "rescaling_eigenvalue_agreement",
            worst <= cfg.tol_rescale,
            f"max relative gap {worst:.3e}",
        )
    ]
    cols = ["eps", "index", "ev_unit_cell", "ev_scaled_cell", "rel_gap"]
    return cols, rows, checks


RUNNERS = {
    "mesh": run_mesh,
    "steklov": run_steklov,
    "oracle": run_oracle,
    "mslope": run_mslope,
    "homslope": run_homslope,
    "dispersion": run_dispersion,
    "correctors": run_correctors,
    "rescale": run_rescale,
}


def _write_csv(path, cols, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow(["%.17g" % v for v in row])


def run(cfg, out_dir):
    """Execute the configured experiments; returns (summary dict, exit code)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "version": __version__,
        "config": cfg.as_dict(),
        "config_hash": cfg.digest(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "experiments": {},
    }
    all_pass = True
    for name in cfg.experiments:
        cols, rows, checks = RUNNERS[name](cfg)
        _write_csv(out / f"{name}.csv", cols, rows)
        summary["experiments"][name] = {
            "rows": len(rows),
            "checks": [
                {"name": n, "pass": bool(p), "detail": d} for n, p, d in checks
            ],
        }
        all_pass = all_pass and all(p for _, p, _ in checks)
    summary["all_pass"] = bool(all_pass)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary, 0 if all_pass else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="hicon", description="Stiff-soft-stiff period cell experiments"
    )
    parser.add_argument(
        "experiment",
        nargs="*",
        help="experiments to run (default: those listed in the config)",
    )
    parser.add_argument("--config", default=None, help="TOML or JSON config file")
    parser.add_argument("--out", default="out", help="output directory")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            {"experiments": list(args.experiment)} if args.experiment else None,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    summary, code = run(cfg, args.out)
    for name, entry in summary["experiments"].items():
        for chk in entry["checks"]:
            status = "PASS" if chk["pass"] else "FAIL"
            print(f"{status} {name}:{chk['name']}: {chk['detail']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
