"""Small-quasimomentum asymptotics of the stiff-landscape Steklov eigenvalue.

At tau = 0 the first Steklov eigenvalue of the stiff landscape vanishes (the
constant trace is harmonic).  For small tau = t theta it opens quadratically,

    mu_1^ls(t theta) = -alpha_2(theta) t^2 + O(t^3),

and the curvature alpha_2 is computed from the periodic cell problem on the
landscape region Q_ls:

    -div(grad u_1 + theta) = 0 in Q_ls,   (grad u_1 + theta) . n = 0 on Gamma,

with periodic conditions on the outer square and n the outward normal of
Q_ls on the interface.  Then

    alpha_2(theta) = (1 / |Gamma_ls|) (theta . int grad u_1 + |Q_ls| |theta|^2),

which coincides with (|Q_ls| |theta|^2 - ||grad u_1||^2) / |Gamma_ls| by the
energy identity.  The quadratic form theta -> |Gamma_ls| alpha_2(theta) is the
effective conductivity form of the perforated landscape, recovered here as a
2x2 matrix by polarization.
"""

import numpy as np
import scipy.linalg

from .boundary_triple import spectral_projection
from .errors import SingularSystem
from .geometry import STIFF_LS


def _local_index(ctx):
    """Map free dof -> local stiff-landscape index."""
    return {int(v): k for k, v in enumerate(ctx.regions[STIFF_LS].verts)}


def _edge_third_vertex(ctx):
    """Map each interface edge (sorted global pair) to the opposite vertex
    of its unique adjacent stiff-landscape triangle."""
    mesh = ctx.mesh
    tris = mesh.triangles[mesh.tri_region == STIFF_LS]
    third = {}
    for tri in tris:
        for k in range(3):
            a, b, c = tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]
            third[(min(a, b), max(a, b))] = c
    return third


def boundary_load(ctx, theta):
    """Load vector b_v = -int_Gamma (theta . n) v of the cell problem.

    n is the outward unit normal of the landscape region on its interface,
    determined per edge by the adjacent landscape triangle; theta . n is
    constant on each straight edge, so the edge integral is exact.
    """
    theta = np.asarray(theta, dtype=float)
    f2l = _local_index(ctx)
    third = _edge_third_vertex(ctx)
    loop = ctx.mesh.gamma_ls
    pts = ctx.mesh.vertices * ctx.scale
    b = np.zeros(len(ctx.regions[STIFF_LS].verts))
    for k in range(len(loop)):
        a, c = int(loop[k]), int(loop[(k + 1) % len(loop)])
        t = pts[c] - pts[a]
        ell = float(np.hypot(t[0], t[1]))
        n = np.array([t[1], -t[0]]) / ell
        mid = 0.5 * (pts[a] + pts[c])
        opp = pts[third[(min(a, c), max(a, c))]]
        if n @ (opp - mid) > 0.0:
            n = -n
        w = -(theta @ n) * ell / 2.0
        b[f2l[int(ctx.fold[a])]] += w
        b[f2l[int(ctx.fold[c])]] += w
    return b


def solve_u1(ctx, theta):
    """Mean-zero corrector of the landscape cell problem for direction theta.

    Solves the Neumann problem with a Lagrange multiplier enforcing zero
    mass-mean; returns (u_1, b) with b the boundary load.
    """
    r = ctx.regions[STIFF_LS]
    n = len(r.verts)
    b = boundary_load(ctx, theta)
    m = r.M @ np.ones(n)
    sys = np.zeros((n + 1, n + 1))
    sys[:n, :n] = r.K0
    sys[:n, n] = m
    sys[n, :n] = m
    try:
        sol = scipy.linalg.solve(sys, np.concatenate([b, [0.0]]), assume_a="sym")
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystem(f"landscape cell problem: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("landscape cell problem produced non-finite data")
    return sol[:n], b


def mean_gradient(ctx, u1):
    """int_{Q_ls} grad u_1, assembled from the per-triangle P1 gradients."""
    mesh = ctx.mesh
    tris = mesh.triangles[mesh.tri_region == STIFF_LS]
    f2l = _local_index(ctx)
    total = np.zeros(2)
    verts = mesh.vertices * ctx.scale
    for tri in tris:
        p = verts[tri]
        e1 = p[1] - p[0]
        e2 = p[2] - p[0]
        area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
        grads = np.array(
            [
                [p[1, 1] - p[2, 1], p[2, 0] - p[1, 0]],
                [p[2, 1] - p[0, 1], p[0, 0] - p[2, 0]],
                [p[0, 1] - p[1, 1], p[1, 0] - p[0, 0]],
            ]
        ) / (2.0 * area)
        loc = [f2l[int(ctx.fold[v])] for v in tri]
        total += area * (u1[loc] @ grads)
    return total


def alpha2(ctx, theta, u1=None):
    """Quadratic Steklov curvature alpha_2(theta) of the landscape."""
    theta = np.asarray(theta, dtype=float)
    if u1 is None:
        u1, _ = solve_u1(ctx, theta)
    area = ctx.mesh.region_area(STIFF_LS) * ctx.scale**2
    length = ctx.mesh.interface_length("ls") * ctx.scale
    return float(theta @ mean_gradient(ctx, u1) + area * (theta @ theta)) / length


def mu_star(ctx):
    """Effective negative-definite 2x2 matrix: mu* tau . tau = -|tau|^2 alpha_2.

    Assembled by polarization of alpha_2 over e_1, e_2 and their diagonal."""
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    mix = np.array([1.0, 1.0]) / np.sqrt(2.0)
    q11 = alpha2(ctx, e1)
    q22 = alpha2(ctx, e2)
    q12 = alpha2(ctx, mix) - 0.5 * (q11 + q22)
    return -np.array([[q11, q12], [q12, q22]])


def steklov_expansion_rows(ctx, theta, t_values):
    """Compare mu_1^ls(t theta) with its quadratic prediction -alpha_2 t^2.

    Returns a list of dicts with keys t, mu1_ls, prediction and excess, the
    cubic-normalized remainder |mu_1 + alpha_2 t^2| / t^3.
    """
    theta = np.asarray(theta, dtype=float)
    theta = theta / np.linalg.norm(theta)
    a2 = alpha2(ctx, theta)
    rows = []
    for t in t_values:
        sp = spectral_projection(ctx, t * theta)
        mu = float(sp.mu1_ls)
        rows.append(
            {
                "t": float(t),
                "mu1_ls": mu,
                "prediction": -a2 * t * t,
                "excess": abs(mu + a2 * t * t) / t**3,
            }
        )
    return rows


__all__ = [
    "boundary_load",
    "solve_u1",
    "mean_gradient",
    "alpha2",
    "mu_star",
    "steklov_expansion_rows",
]
