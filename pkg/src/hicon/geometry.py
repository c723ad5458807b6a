"""Period-cell geometry.

Builds a conforming triangulation of the unit cell Q = [0,1)^2 containing two
concentric polygonal circles: an inner disc (the stiff interior inclusion), an
annulus around it (the soft layer) and the remaining matrix (the stiff
landscape).  The outer boundary of Q carries a periodic identification with
vertex layouts that match exactly on opposite edges, so periodicity can be
enforced by merging degrees of freedom.

The mesh is fully structured and deterministic: rings of vertices are laid out
on concentric circles, with the angular resolution halved towards the centre
of the disc to keep triangles well shaped, and blended from the outer circle
to the square boundary in the landscape region.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

# region tags
STIFF_INT = 0
SOFT = 1
STIFF_LS = 2

REGION_NAMES = {STIFF_INT: "stiff_int", SOFT: "soft", STIFF_LS: "stiff_ls"}

_SNAP = 1e-12


@dataclass
class CellSpec:
    """Parameters of the stiff-soft-stiff period cell.

    Attributes
    ----------
    center : tuple of float
        Centre of the two circles.  Must be (0.5, 0.5): only the centred cell
        admits matching vertex layouts on opposite boundary edges.
    r_in, r_out : float
        Radii of the inner and outer interface circles, 0 < r_in < r_out.
    h : float
        Target mesh size.
    n_bnd : int
        Number of polygon segments per interface circle.  Must be a positive
        multiple of 8 (so that the diagonal rays hit the cell corners) and at
        least 16.
    min_angle : float
        Quality floor, in degrees, enforced on every triangle.
    gap_min : float
        Required clearance between the outer circle and the cell boundary.
    """

    center: tuple = (0.5, 0.5)
    r_in: float = 0.2
    r_out: float = 0.35
    h: float = 0.05
    n_bnd: int = 64
    min_angle: float = 20.0
    gap_min: float = 0.02

    def validate(self):
        cx, cy = self.center
        if abs(cx - 0.5) > _SNAP or abs(cy - 0.5) > _SNAP:
            raise GeometryError(
                "center must be (0.5, 0.5) so opposite boundary edges carry "
                "matching vertex layouts"
            )
        if not (0.0 < self.r_in < self.r_out):
            raise GeometryError("need 0 < r_in < r_out")
        gap = min(cx, 1.0 - cx, cy, 1.0 - cy) - self.r_out
        if gap < self.gap_min:
            raise GeometryError(
                f"outer circle too close to the cell boundary (gap {gap:.4g} "
                f"< {self.gap_min})"
            )
        if self.h <= 0.0:
            raise GeometryError("mesh size h must be positive")
        if self.n_bnd < 16 or self.n_bnd % 8 != 0:
            raise GeometryError("n_bnd must be a multiple of 8, at least 16")
        if 2.0 * np.pi * self.r_in / self.n_bnd > 2.0 * self.h:
            raise GeometryError(
                "n_bnd too coarse to resolve the inner circle at mesh size h"
            )


@dataclass
class PeriodCellMesh:
    """Conforming triangulation of the period cell.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counter-clockwise vertex triples
    tri_region : (nt,) int array of region tags
    gamma_int, gamma_ls : int arrays
        Interface vertex loops in positively oriented (counter-clockwise)
        order; edge k of the loop joins entry k to entry k+1 (cyclically).
    periodic_map : (nv,) int array
        Master vertex index for every vertex; identity away from the cell
        boundary, and maps slave boundary vertices to their masters.
    spec : CellSpec
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tri_region: np.ndarray
    gamma_int: np.ndarray
    gamma_ls: np.ndarray
    periodic_map: np.ndarray
    spec: CellSpec
    free_dofs: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.free_dofs is None:
            nv = len(self.vertices)
            self.free_dofs = np.flatnonzero(self.periodic_map == np.arange(nv))

    # -- metric helpers ----------------------------------------------------

    def triangle_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def region_area(self, region):
        areas = self.triangle_areas()
        return float(areas[self.tri_region == region].sum())

    def interface_length(self, which):
        loop = self.gamma_int if which == "int" else self.gamma_ls
        pts = self.vertices[loop]
        seg = np.roll(pts, -1, axis=0) - pts
        return float(np.hypot(seg[:, 0], seg[:, 1]).sum())

    def interface_edges(self, which):
        loop = self.gamma_int if which == "int" else self.gamma_ls
        return np.column_stack([loop, np.roll(loop, -1)])

    def min_triangle_angle(self):
        """Smallest interior angle over all triangles, in degrees."""
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            na = np.hypot(a[:, 0], a[:, 1])
            nb = np.hypot(b[:, 0], b[:, 1])
            cosang = (a * b).sum(axis=1) / (na * nb)
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
        return float(np.min(angles))

    # -- serialization -----------------------------------------------------

    def to_json(self):
        doc = {
            "spec": {
                "center": list(self.spec.center),
                "r_in": self.spec.r_in,
                "r_out": self.spec.r_out,
                "h": self.spec.h,
                "n_bnd": self.spec.n_bnd,
            },
            "vertices": [[f"{x:.17g}", f"{y:.17g}"] for x, y in self.vertices],
            "triangles": self.triangles.tolist(),
            "tri_region": self.tri_region.tolist(),
            "gamma_int": self.gamma_int.tolist(),
            "gamma_ls": self.gamma_ls.tolist(),
            "periodic_map": self.periodic_map.tolist(),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        spec = CellSpec(
            center=tuple(doc["spec"]["center"]),
            r_in=doc["spec"]["r_in"],
            r_out=doc["spec"]["r_out"],
            h=doc["spec"]["h"],
            n_bnd=doc["spec"]["n_bnd"],
        )
        verts = np.array([[float(x), float(y)] for x, y in doc["vertices"]])
        return cls(
            vertices=verts,
            triangles=np.array(doc["triangles"], dtype=int),
            tri_region=np.array(doc["tri_region"], dtype=int),
            gamma_int=np.array(doc["gamma_int"], dtype=int),
            gamma_ls=np.array(doc["gamma_ls"], dtype=int),
            periodic_map=np.array(doc["periodic_map"], dtype=int),
            spec=spec,
        )


# ---------------------------------------------------------------------------
# mesh construction


class _Builder:
    def __init__(self):
        self.verts = []
        self.tris = []
        self.tags = []

    def ring(self, center, radius, n, radius_of_angle=None):
        """Add n vertices on a circle (or generalized ring) and return ids."""
        idx = []
        cx, cy = center
        for k in range(n):
            ang = 2.0 * np.pi * k / n
            r = radius if radius_of_angle is None else radius_of_angle(ang)
            idx.append(len(self.verts))
            self.verts.append((cx + r * np.cos(ang), cy + r * np.sin(ang)))
        return np.array(idx, dtype=int)

    def point(self, x, y):
        self.verts.append((x, y))
        return len(self.verts) - 1

    def tri(self, a, b, c, tag):
        self.tris.append((a, b, c))
        self.tags.append(tag)

    def band_equal(self, inner, outer, tag):
        """Quad band between two rings with equal vertex counts."""
        n = len(inner)
        assert len(outer) == n
        for k in range(n):
            k1 = (k + 1) % n
            self.tri(inner[k], outer[k], outer[k1], tag)
            self.tri(inner[k], outer[k1], inner[k1], tag)

    def band_double(self, coarse, fine, tag):
        """Band between an inner coarse ring and an outer ring with 2x points."""
        nh = len(coarse)
        n = len(fine)
        assert n == 2 * nh
        for k in range(nh):
            p0, p1 = coarse[k], coarse[(k + 1) % nh]
            q0, q1, q2 = fine[2 * k], fine[2 * k + 1], fine[(2 * k + 2) % n]
            self.tri(p0, q0, q1, tag)
            self.tri(p0, q1, p1, tag)
            self.tri(p1, q1, q2, tag)

    def fan(self, center_id, ring, tag):
        n = len(ring)
        for k in range(n):
            self.tri(center_id, ring[k], ring[(k + 1) % n], tag)


def _square_radius(ang):
    """Distance from the cell centre to the boundary of Q along a ray."""
    return 0.5 / max(abs(np.cos(ang)), abs(np.sin(ang)))


def build_period_cell(spec):
    """Triangulate the period cell described by `spec`.

    Returns
    -------
    PeriodCellMesh
    """
    spec.validate()
    c = spec.center
    n = spec.n_bnd
    b = _Builder()
    arc = 2.0 * np.pi * spec.r_in / n  # edge length on the inner circle

    # --- stiff interior disc: rings from the interface towards the centre,
    # halving the angular count each time the radius halves.
    gamma_int = b.ring(c, spec.r_in, n)
    ring_cur, n_cur, r_cur = gamma_int, n, spec.r_in
    while n_cur >= 16:
        r_next = 0.5 * r_cur
        step = min(spec.h, 2.0 * np.pi * r_cur / n_cur)
        m = max(1, int(round((r_cur - r_next) / step)))
        radii = np.linspace(r_cur, r_next, m + 1)[1:]
        for j, r in enumerate(radii):
            if j < len(radii) - 1:
                inner = b.ring(c, r, n_cur)
                b.band_equal(inner, ring_cur, STIFF_INT)
                ring_cur = inner
            else:
                inner = b.ring(c, r, n_cur // 2)
                b.band_double(inner, ring_cur, STIFF_INT)
                ring_cur, n_cur = inner, n_cur // 2
        r_cur = r_next
    centre_id = b.point(*c)
    b.fan(centre_id, ring_cur, STIFF_INT)

    # --- soft annulus: uniform quad bands between the two circles.
    r_mid = 0.5 * (spec.r_in + spec.r_out)
    step = min(spec.h, 2.0 * np.pi * r_mid / n)
    m_soft = max(1, int(round((spec.r_out - spec.r_in) / step)))
    ring_cur = gamma_int
    for r in np.linspace(spec.r_in, spec.r_out, m_soft + 1)[1:]:
        outer = b.ring(c, r, n)
        b.band_equal(ring_cur, outer, SOFT)
        ring_cur = outer
    gamma_ls = ring_cur

    # --- stiff landscape: blend rings from the outer circle to the square,
    # doubling the angular count when the rings grow too far apart
    # tangentially for the radial step.
    ray_avg = float(
        np.mean([_square_radius(2 * np.pi * k / n) for k in range(n)])
    ) - spec.r_out
    step = min(spec.h, 2.0 * np.pi * 0.45 / n)
    m_out = max(2, int(round(ray_avg / step)))
    ring_cur, n_cur = gamma_ls, n
    radial = ray_avg / m_out
    for j in range(1, m_out + 1):
        t = j / m_out
        r_rep = (1 - t) * spec.r_out + t * 0.55

        def rho(a, t=t):
            return (1 - t) * spec.r_out + t * _square_radius(a)

        if 2.0 * np.pi * r_rep / n_cur > 1.45 * radial:
            outer = b.ring(c, None, 2 * n_cur, radius_of_angle=rho)
            b.band_double(ring_cur, outer, STIFF_LS)
            ring_cur, n_cur = outer, 2 * n_cur
        else:
            outer = b.ring(c, None, n_cur, radius_of_angle=rho)
            b.band_equal(ring_cur, outer, STIFF_LS)
            ring_cur = outer
    square_ring = ring_cur

    vertices = np.array(b.verts)
    triangles = np.array(b.tris, dtype=int)
    tri_region = np.array(b.tags, dtype=int)

    # snap the outermost ring onto the square exactly
    sq = vertices[square_ring]
    sq[np.abs(sq) < 1e-9] = 0.0
    sq[np.abs(sq - 1.0) < 1e-9] = 1.0
    vertices[square_ring] = sq

    _match_opposite_edges(vertices, square_ring)
    periodic_map = _build_periodic_map(vertices, square_ring)

    mesh = PeriodCellMesh(
        vertices=vertices,
        triangles=triangles,
        tri_region=tri_region,
        gamma_int=gamma_int,
        gamma_ls=gamma_ls,
        periodic_map=periodic_map,
        spec=spec,
    )
    _smooth_landscape(mesh, square_ring)

    bad = mesh.triangle_areas() <= 0.0
    if bad.any():
        raise GeometryError(f"{bad.sum()} inverted triangles produced")
    ang = mesh.min_triangle_angle()
    if ang < spec.min_angle:
        raise GeometryError(
            f"minimum triangle angle {ang:.2f} deg below floor "
            f"{spec.min_angle:.2f} deg"
        )
    return mesh


def _match_opposite_edges(vertices, square_ring):
    """Force bottom/top and left/right boundary layouts to agree exactly."""
    sq = vertices[square_ring]
    bottom = square_ring[sq[:, 1] == 0.0]
    top = square_ring[sq[:, 1] == 1.0]
    left = square_ring[sq[:, 0] == 0.0]
    right = square_ring[sq[:, 0] == 1.0]
    for master, slave, comp in ((bottom, top, 0), (left, right, 1)):
        ms = master[np.argsort(vertices[master, comp], kind="stable")]
        sl = slave[np.argsort(vertices[slave, comp], kind="stable")]
        if len(ms) != len(sl):
            raise GeometryError("opposite boundary edges have unequal layouts")
        gap = np.abs(vertices[ms, comp] - vertices[sl, comp]).max()
        if gap > 1e-6:
            raise GeometryError("opposite boundary edge layouts do not match")
        vertices[sl, comp] = vertices[ms, comp]


def _build_periodic_map(vertices, square_ring):
    nv = len(vertices)
    master = np.arange(nv)
    sq = vertices[square_ring]
    x, y = sq[:, 0], sq[:, 1]

    def find(px, py):
        hit = square_ring[(np.abs(x - px) < 1e-9) & (np.abs(y - py) < 1e-9)]
        if len(hit) != 1:
            raise GeometryError("boundary vertex lookup failed")
        return int(hit[0])

    for v in square_ring:
        vx, vy = vertices[v]
        if vx == 1.0:
            master[v] = find(0.0, vy)
        elif vy == 1.0:
            master[v] = find(vx, 0.0)
    # corners all collapse onto (0, 0)
    bl = find(0.0, 0.0)
    for px, py in ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0)):
        master[find(px, py)] = bl
    # canonicalize (two hops suffice for edge->edge->corner chains)
    master = master[master]
    master = master[master]
    return master


def _smooth_landscape(mesh, square_ring, n_iter=20, relax=0.7):
    """Laplacian smoothing of interior landscape vertices.

    The blended rings between the outer circle and the square can be skewed
    near the corners; a few smoothing sweeps restore near-isotropic triangles.
    Interface and boundary vertices are kept fixed, so region areas and the
    periodic identification are untouched.
    """
    tris = mesh.triangles[mesh.tri_region == STIFF_LS]
    ls_verts = np.unique(tris)
    fixed = set(mesh.gamma_ls.tolist()) | set(square_ring.tolist())
    movable = np.array([v for v in ls_verts if v not in fixed], dtype=int)
    if len(movable) == 0:
        return
    # vertex -> neighbour adjacency within the landscape region
    nbr = {v: set() for v in ls_verts}
    for a, bb, cc in tris:
        nbr[a].update((bb, cc))
        nbr[bb].update((a, cc))
        nbr[cc].update((a, bb))
    nbr_idx = [np.fromiter(sorted(nbr[v]), dtype=int) for v in movable]
    for _ in range(n_iter):
        pos = mesh.vertices
        new = np.array([pos[idx].mean(axis=0) for idx in nbr_idx])
        pos[movable] = (1 - relax) * pos[movable] + relax * new


def trace_space(mesh, which):
    """Ordered trace vertex indices of an interface.

    Parameters
    ----------
    mesh : PeriodCellMesh
    which : {"int", "ls"}

    Returns
    -------
    int array of length n_bnd, a positively oriented closed loop.  The
    concatenation (int, ls) fixes the basis of the discrete boundary space.
    """
    if which == "int":
        return mesh.gamma_int.copy()
    if which == "ls":
        return mesh.gamma_ls.copy()
    raise ValueError(f"unknown interface {which!r}")
