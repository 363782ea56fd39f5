"""Per-voxel feature extraction: spherical harmonics, tensor eigenvalues,
rotation-invariant energies, and Funk-Radon ODF coefficients.

All operations are pure per-voxel maps over the normalized signal S/S0. The
SH basis is the real symmetric (even-degree) basis, flat-indexed degree-major:
l = 0, 2, ..., L with m = -l..l inside each degree.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import sph_harm_y

from .errors import NumericalError, ValidationError
from .volumes import FeatureVolume

# P_l(0) for the even degrees used by the Funk-Radon transform.
LEGENDRE_AT_ZERO = {0: 1.0, 2: -0.5, 4: 0.375, 6: -0.3125, 8: 35.0 / 128.0}


def legendre_at_zero(l: int) -> float:
    """P_l(0) by the downward recurrence P_l(0) = -((l-1)/l) P_{l-2}(0)."""
    if l % 2 == 1:
        return 0.0
    p = 1.0
    for k in range(2, l + 1, 2):
        p *= -(k - 1.0) / k
    return p


def sh_index_degrees(order: int) -> np.ndarray:
    """Degree l of each flat coefficient index for an even-order basis."""
    return np.array([l for l in range(0, order + 1, 2) for _ in range(2 * l + 1)])


def _real_sh_matrix(order, directions):
    """Real symmetric SH basis evaluated at unit directions, (m, n_coeffs).

    m=0 keeps Y_l^0; m>0 maps to sqrt(2)*(-1)^m*Re(Y_l^m); m<0 to
    sqrt(2)*(-1)^m*Im(Y_l^|m|). Orthonormal on the sphere.
    """
    d = np.asarray(directions, dtype=np.float64)
    theta = np.arccos(np.clip(d[:, 2], -1.0, 1.0))  # polar
    phi = np.arctan2(d[:, 1], d[:, 0])  # azimuth
    cols = []
    for l in range(0, order + 1, 2):
        for m in range(-l, l + 1):
            y = sph_harm_y(l, abs(m), theta, phi)
            if m < 0:
                cols.append(np.sqrt(2.0) * (-1.0) ** m * y.imag)
            elif m == 0:
                cols.append(y.real)
            else:
                cols.append(np.sqrt(2.0) * (-1.0) ** m * y.real)
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class ShBasis:
    """Design matrix of the real symmetric SH basis at a direction set."""

    order: int
    n_coeffs: int
    design_matrix: np.ndarray
    regularization: float

    @classmethod
    def for_directions(cls, directions, order: int, regularization: float = 0.006):
        if order not in (4, 8):
            raise ValidationError(f"SH order must be 4 or 8, got {order}")
        if regularization < 0:
            raise ValidationError(f"regularization must be >= 0, got {regularization}")
        B = _real_sh_matrix(order, directions)
        n = (order + 1) * (order + 2) // 2
        return cls(order=order, n_coeffs=n, design_matrix=B, regularization=regularization)

    def fit_matrix(self):
        """Solve operator: coefficients = fit_matrix @ signals.

        Implements (B'B + lambda * diag((l(l+1))^2))^-1 B' with the
        Laplace-Beltrami penalty; raises when lambda = 0 and the basis is
        column-rank deficient at this direction set.
        """
        B = self.design_matrix
        lam = self.regularization
        if lam == 0.0 and np.linalg.matrix_rank(B) < self.n_coeffs:
            raise NumericalError(
                f"order-{self.order} SH basis is rank deficient on "
                f"{B.shape[0]} directions; unregularized fit has no unique solution"
            )
        l = sh_index_degrees(self.order)
        penalty = (l * (l + 1.0)) ** 2
        return np.linalg.solve(B.T @ B + lam * np.diag(penalty), B.T)


def _normalized_signal(volume):
    """(n_voxels, n_gradients) matrix of S/S0 in flat x-fastest scan order."""
    s = volume.signal.transpose(2, 1, 0, 3).reshape(-1, volume.signal.shape[3])
    s0 = volume.s0.transpose(2, 1, 0).reshape(-1, 1)
    return s / s0


def _to_grid(flat, dims, n):
    X, Y, Z = dims
    return flat.reshape(Z, Y, X, n).transpose(2, 1, 0, 3)


def fit_sh(volume, order: int, lam: float = 0.006) -> FeatureVolume:
    """Regularized least-squares SH coefficients of S/S0 per voxel."""
    basis = ShBasis.for_directions(volume.gradients.directions, order, lam)
    F = basis.fit_matrix()
    coeffs = _normalized_signal(volume) @ F.T
    return FeatureVolume(
        dims=volume.dims,
        feature_kind=f"SH{order}",
        values=_to_grid(coeffs, volume.dims, basis.n_coeffs),
    )


def tensor_design_matrix(directions) -> np.ndarray:
    """Rows [gx^2, gy^2, gz^2, 2 gx gy, 2 gx gz, 2 gy gz] per direction."""
    g = np.asarray(directions, dtype=np.float64)
    return np.stack(
        [
            g[:, 0] ** 2,
            g[:, 1] ** 2,
            g[:, 2] ** 2,
            2.0 * g[:, 0] * g[:, 1],
            2.0 * g[:, 0] * g[:, 2],
            2.0 * g[:, 1] * g[:, 2],
        ],
        axis=1,
    )


def _tensor_from_coeffs(d):
    return np.array(
        [
            [d[..., 0], d[..., 3], d[..., 4]],
            [d[..., 3], d[..., 1], d[..., 5]],
            [d[..., 4], d[..., 5], d[..., 2]],
        ]
    )


@dataclass(frozen=True, eq=False)
class TensorFit:
    """Symmetric diffusion tensor and its descending eigenvalues (mm^2/s)."""

    tensor: np.ndarray
    eigenvalues: np.ndarray

    @classmethod
    def from_tensor(cls, tensor):
        t = np.asarray(tensor, dtype=np.float64)
        if t.shape != (3, 3) or not np.allclose(t, t.T, atol=1e-12):
            raise ValidationError("tensor must be symmetric 3x3")
        ev = np.linalg.eigvalsh(t)[::-1]
        return cls(tensor=t, eigenvalues=ev)


def fit_tensor_eigenvalues(volume) -> FeatureVolume:
    """Sorted diffusion-tensor eigenvalues per voxel (kind EIG).

    Log-linear least squares ln(S/S0) = -b g'Dg, with S/S0 clamped to a
    1e-6 floor so zero or negative noise-floored samples survive the log.
    """
    G = tensor_design_matrix(volume.gradients.directions)
    if np.linalg.matrix_rank(G) < 6:
        raise ValidationError(
            "gradient directions do not span the 6 tensor components; "
            "need >= 6 non-collinear directions"
        )
    ratios = np.maximum(_normalized_signal(volume), 1e-6)
    rhs = -np.log(ratios) / volume.gradients.b_value
    coeffs, *_ = np.linalg.lstsq(G, rhs.T, rcond=None)  # (6, n_voxels)
    tensors = np.empty((coeffs.shape[1], 3, 3))
    tensors[:, 0, 0] = coeffs[0]
    tensors[:, 1, 1] = coeffs[1]
    tensors[:, 2, 2] = coeffs[2]
    tensors[:, 0, 1] = tensors[:, 1, 0] = coeffs[3]
    tensors[:, 0, 2] = tensors[:, 2, 0] = coeffs[4]
    tensors[:, 1, 2] = tensors[:, 2, 1] = coeffs[5]
    ev = np.linalg.eigvalsh(tensors)[:, ::-1]  # descending
    return FeatureVolume(
        dims=volume.dims, feature_kind="EIG", values=_to_grid(ev, volume.dims, 3)
    )


def _require_sh(fv, who):
    if fv.feature_kind not in ("SH4", "SH8"):
        raise ValidationError(f"{who} needs SH4 or SH8 input, got {fv.feature_kind}")
    return int(fv.feature_kind[2])


def rotation_invariant_features(sh: FeatureVolume) -> FeatureVolume:
    """Per-degree SH power spectrum p_l = sum_m c_{l,m}^2 (kind SH4RI/SH8RI)."""
    order = _require_sh(sh, "rotation_invariant_features")
    degrees = sh_index_degrees(order)
    powers = []
    for l in range(0, order + 1, 2):
        block = sh.values[..., degrees == l]
        powers.append(np.sum(block * block, axis=-1))
    return FeatureVolume(
        dims=sh.dims,
        feature_kind=f"SH{order}RI",
        values=np.stack(powers, axis=-1),
    )


def sh_to_odf(sh: FeatureVolume) -> FeatureVolume:
    """Funk-Radon transform in the SH domain: c' = 2 pi P_l(0) c."""
    order = _require_sh(sh, "sh_to_odf")
    degrees = sh_index_degrees(order)
    scale = 2.0 * np.pi * np.array([legendre_at_zero(l) for l in degrees])
    return FeatureVolume(
        dims=sh.dims, feature_kind=f"ODF{order}", values=sh.values * scale
    )
