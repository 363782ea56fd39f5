"""Synthetic crossing-fiber phantom with exact ground-truth labels.

A flat disk of CSF ringed by one voxel of GM, threaded by white-matter
strands: one straight bundle, one U-shaped bundle, and a pair crossing at
~62 degrees. Each voxel's signal follows the multi-tensor model
S(g) = S0 * sum_i f_i * exp(-b g'D_i g), with fractions given by each
strand's point-spread volume fraction at the voxel (partial-volume mixing
with the isotropic background near strand edges), plus optional Rician
noise. Labels come from voxel-center geometry alone, so edge voxels carry
mixed signal under an exact label, as in scanner data. Geometry is
constant across slices; labels are assigned before noise.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ValidationError
from .sphere import unit_sphere_directions
from .volumes import CSF, GM, WMCF, WMSF, DwiVolume, GradientTable, LabelVolume

# Tissue diffusion parameters (mm^2/s) and baseline signal level. These are
# generator configuration constants, not measured values.
WM_EIGENVALUES = (1.7e-3, 0.3e-3, 0.3e-3)
CSF_DIFFUSIVITY = 3.0e-3
GM_DIFFUSIVITY = 0.8e-3
S0_LEVEL = 1000.0


@dataclass(frozen=True, eq=False)
class FiberStrand:
    """A 2D bundle: polyline centerline in slice coordinates + half width."""

    centerline: np.ndarray
    half_width: float

    def __post_init__(self):
        c = np.asarray(self.centerline, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 2:
            raise ValidationError(f"centerline must be (>=2, 2), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("centerline contains non-finite points")
        if not self.half_width > 0:
            raise ValidationError(f"half_width must be > 0, got {self.half_width}")
        seg = np.diff(c, axis=0)
        if np.any(np.einsum("ij,ij->i", seg, seg) < 1e-20):
            raise ValidationError("centerline has zero-length segments")
        object.__setattr__(self, "centerline", c)
        object.__setattr__(self, "half_width", float(self.half_width))


@dataclass(frozen=True, eq=False)
class PhantomSpec:
    """Acquisition and geometry parameters for one synthetic volume."""

    dims: tuple = (64, 64, 3)
    n_directions: int = 64
    b_value: float = 1500.0
    snr: float = 20.0
    seed: int = 42
    geometry: tuple = None
    crossing_angle_deg: float = 30.0
    # acquisition point-spread: compartment fractions follow a Gaussian-
    # blurred strand indicator of this width (voxels), so edge voxels mix
    # tissue like scanner voxels do while labels stay center-of-voxel
    # exact. 0 restores the crisp all-or-nothing signal model.
    edge_sigma: float = 0.8

    def __post_init__(self):
        dims = tuple(int(v) for v in self.dims)
        if len(dims) != 3 or any(v < 1 for v in dims):
            raise ValidationError(f"dims must be three positive extents, got {dims}")
        if self.n_directions < 6:
            raise ValidationError(f"n_directions must be >= 6, got {self.n_directions}")
        if not self.b_value > 0:
            raise ValidationError(f"b_value must be > 0, got {self.b_value}")
        if self.snr < 0:
            raise ValidationError(f"snr must be >= 0, got {self.snr}")
        if int(self.seed) < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {self.seed}")
        geometry = self.geometry
        if geometry is None:
            geometry = default_fibercup_geometry()
        geometry = tuple(geometry)
        for s in geometry:
            if not isinstance(s, FiberStrand):
                raise ValidationError("geometry must contain FiberStrand values")
        if not self.crossing_angle_deg >= 0:
            raise ValidationError("crossing_angle_deg must be >= 0")
        if not self.edge_sigma >= 0:
            raise ValidationError("edge_sigma must be >= 0")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "geometry", geometry)


def _arc(center, radius, start_deg, end_deg, n=33):
    t = np.linspace(np.deg2rad(start_deg), np.deg2rad(end_deg), n)
    return np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=1)


def default_fibercup_geometry():
    """Fixed strand layout: straight, U-shaped, a 62 degree crossing pair,
    and a shallow secant grazing the U-turn.

    Laid out inside the central disk of a 64x64 slice so no strand touches
    the GM border ring; the crossing tangents stay >= 60 degrees apart.
    The secant runs nearly tangent to the U-turn's bottom, so the local
    angle between the two bundles sweeps continuously through the WMCF
    labeling threshold along their overlap, the kind of graded crossing
    configuration the physical phantom is built around. Identical on every
    call.
    """
    hw = 2.5
    straight = FiberStrand(
        centerline=np.array([[11.0, 47.0], [52.0, 47.0]]), half_width=hw
    )
    u_turn = FiberStrand(
        centerline=_arc((31.5, 18.0), 9.0, 180.0, 360.0), half_width=hw
    )
    # slopes +-0.6 around the midpoint (31.5, 31.125): 2*atan(0.6) = 61.93 deg
    cross_up = FiberStrand(
        centerline=np.array([[14.5, 20.925], [48.5, 41.325]]), half_width=hw
    )
    cross_down = FiberStrand(
        centerline=np.array([[14.5, 41.325], [48.5, 20.925]]), half_width=hw
    )
    secant = FiberStrand(
        centerline=np.array([[20.0, 12.0], [43.0, 12.0]]), half_width=hw
    )
    return (straight, u_turn, cross_up, cross_down, secant)


def _polyline_distance(strand, points):
    """(dist, tangents): distance (N,) to the centerline polyline and the
    unit tangent (N, 2) of the nearest segment."""
    A = strand.centerline[:-1]
    B = strand.centerline[1:]
    seg = B - A
    seg_len2 = np.einsum("ij,ij->i", seg, seg)
    rel = points[:, None, :] - A[None, :, :]
    t = np.clip(np.einsum("nsj,sj->ns", rel, seg) / seg_len2, 0.0, 1.0)
    proj = A[None, :, :] + t[:, :, None] * seg[None, :, :]
    d2 = np.einsum("nsj->ns", (points[:, None, :] - proj) ** 2)
    nearest = np.argmin(d2, axis=1)
    dist = np.sqrt(d2[np.arange(len(points)), nearest])
    tangents = seg[nearest] / np.sqrt(seg_len2[nearest])[:, None]
    return dist, tangents


def _strand_membership(strand, points):
    """(inside, tangents): bool (N,) and unit tangent (N, 2) at the nearest
    centerline segment (tangents are meaningful only where inside)."""
    dist, tangents = _polyline_distance(strand, points)
    return dist <= strand.half_width, tangents


def _strand_fraction(strand, dist, sigma):
    """Volume fraction of the strand at each voxel center: the strand's
    indicator (dist <= half_width) convolved with a Gaussian point-spread
    of width sigma, which for a straight edge is the Gaussian CDF of the
    signed edge distance. sigma=0 degenerates to the crisp indicator."""
    signed = strand.half_width - dist
    if sigma == 0.0:
        return (signed >= 0.0).astype(np.float64)
    z = signed / (sigma * np.sqrt(2.0))
    return 0.5 * (1.0 + erf(z))


def _slice_layout(spec):
    """Per-voxel label map and strand tangent stack for one slice.

    Returns (labels (N,), per-strand (member_mask, tangents), count, ring
    mask, voxel centers). N scans the slice x-fastest to match the volume's
    flat order.
    """
    X, Y, _ = spec.dims
    ys, xs = np.meshgrid(np.arange(Y), np.arange(X), indexing="ij")
    points = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)

    members = []
    for strand in spec.geometry:
        lo = strand.centerline.min(axis=0) - strand.half_width
        hi = strand.centerline.max(axis=0) + strand.half_width
        if lo[0] < -0.5 or lo[1] < -0.5 or hi[0] > X - 0.5 or hi[1] > Y - 0.5:
            raise ValidationError(
                f"strand envelope [{lo}, {hi}] leaves the {X}x{Y} slice"
            )
        dist, tangents = _polyline_distance(strand, points)
        members.append((dist <= strand.half_width, dist, tangents))

    count = np.sum([m for m, _, _ in members], axis=0)
    center = np.array([(X - 1) / 2.0, (Y - 1) / 2.0])
    radius = min(X, Y) / 2.0 - 2.0
    r = np.linalg.norm(points - center, axis=1)
    ring = (r > radius - 1.0) & (r <= radius)

    labels = np.full(points.shape[0], CSF, dtype=np.uint8)
    labels[ring] = GM
    single = count == 1
    labels[single] = WMSF

    multi = count >= 2
    if np.any(multi):
        cos_thresh = np.cos(np.deg2rad(spec.crossing_angle_deg))
        idx = np.flatnonzero(multi)
        for i in idx:
            tans = [t[i] for m, _, t in members if m[i]]
            crossing = False
            for a in range(len(tans)):
                for b in range(a + 1, len(tans)):
                    # line orientations: fold the angle into [0, 90]
                    if abs(float(np.dot(tans[a], tans[b]))) <= cos_thresh:
                        crossing = True
            labels[i] = WMCF if crossing else WMSF
    return labels, members, count, ring, points


def _wm_tensor_attenuation(tangent, gradients, b):
    """exp(-b g'Dg) for a cylinder tensor aligned with the in-slice tangent."""
    d_par, d_perp, _ = WM_EIGENVALUES
    dot = gradients[:, 0] * tangent[0] + gradients[:, 1] * tangent[1]
    return np.exp(-b * (d_perp + (d_par - d_perp) * dot * dot))


def generate_phantom(spec: PhantomSpec):
    """Simulate one volume; returns (DwiVolume, LabelVolume).

    Labels come from geometry alone (pre-noise). Noise, when snr > 0, is
    Rician with sigma = S0/snr and a per-voxel stream seeded by
    (seed, x, y, z) so output never depends on evaluation order.
    """
    X, Y, Z = spec.dims
    gradients = GradientTable(
        directions=unit_sphere_directions(spec.n_directions), b_value=spec.b_value
    )
    g = gradients.directions
    nG = len(gradients)

    labels2d, members, count, ring, points = _slice_layout(spec)
    present = np.unique(labels2d)
    if len(present) < 4:
        raise ValidationError(
            f"geometry produced only classes {present.tolist()}; "
            "training needs CSF, GM, WMSF, and WMCF"
        )

    # attenuation profile per slice voxel, shared by all slices: each voxel
    # mixes the tensor compartments of the strands present at it with the
    # isotropic background, weighted by point-spread volume fraction.
    # fractions are crisp membership when edge_sigma is 0.
    d_par, d_perp = WM_EIGENVALUES[0], WM_EIGENVALUES[1]
    acc = np.zeros((X * Y, nG))
    total = np.zeros(X * Y)
    for strand, (mask, dist, tangents) in zip(spec.geometry, members):
        frac = _strand_fraction(strand, dist, spec.edge_sigma)
        idx = np.flatnonzero(frac > 1e-12)
        if idx.size == 0:
            continue
        dot = tangents[idx] @ g[:, :2].T
        acc[idx] += frac[idx, None] * np.exp(
            -spec.b_value * (d_perp + (d_par - d_perp) * dot * dot)
        )
        total += frac
    bg = np.where(ring, np.exp(-spec.b_value * GM_DIFFUSIVITY),
                  np.exp(-spec.b_value * CSF_DIFFUSIVITY))
    att = np.empty((X * Y, nG))
    pure = total >= 1.0
    att[pure] = acc[pure] / total[pure, None]
    att[~pure] = acc[~pure] + (1.0 - total[~pure, None]) * bg[~pure, None]

    clean2d = S0_LEVEL * att  # (X*Y, G), x-fastest scan of one slice

    s0 = np.full((X, Y, Z), S0_LEVEL)
    signal = np.empty((X, Y, Z, nG))
    labels = np.empty((X, Y, Z), dtype=np.uint8)
    grid2d = labels2d.reshape(Y, X).T  # back to [x, y]
    sigma = 0.0 if spec.snr == 0 else S0_LEVEL / spec.snr
    for z in range(Z):
        labels[:, :, z] = grid2d
        plane = clean2d.reshape(Y, X, nG).transpose(1, 0, 2)
        if sigma > 0.0:
            noisy = np.empty_like(plane)
            for y in range(Y):
                for x in range(X):
                    rng = np.random.default_rng([spec.seed, x, y, z])
                    eps = rng.normal(0.0, sigma, size=(2, nG))
                    noisy[x, y] = np.hypot(plane[x, y] + eps[0], eps[1])
            signal[:, :, z] = noisy
        else:
            signal[:, :, z] = plane

    dwi = DwiVolume(
        dims=spec.dims, voxel_size=3.0, s0=s0, signal=signal, gradients=gradients
    )
    return dwi, LabelVolume(dims=spec.dims, labels=labels)
