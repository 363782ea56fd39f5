"""Per-feature 2D slice convolution and the flat sample set it feeds.

Each of the n feature maps gets its own w x w kernel, applied slice by slice
(never across z) with zero padding, in cross-correlation orientation. Kernels
are not normalized; weights live in [-2, 2]. The flattened dataset pools
every voxel of every slice into (feature vector, label) pairs with (slice,
x, y) provenance.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import FormatError, ValidationError
from .volumes import FeatureVolume

KERNEL_WEIGHT_RANGE = (-2.0, 2.0)


@dataclass(frozen=True, eq=False)
class KernelBank:
    """One 2D convolution kernel per feature dimension."""

    n: int
    w: int
    kernels: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernels, dtype=np.float64)
        n = int(self.n)
        w = int(self.w)
        if w < 1 or w % 2 == 0:
            raise ValidationError(f"kernel width must be odd and >= 1, got {w}")
        if k.shape != (n, w, w):
            raise ValidationError(f"kernels shape {k.shape} != ({n}, {w}, {w})")
        if not np.all(np.isfinite(k)):
            raise ValidationError("kernel weights must be finite")
        lo, hi = KERNEL_WEIGHT_RANGE
        if np.any(k < lo) or np.any(k > hi):
            raise ValidationError(f"kernel weights must lie in [{lo}, {hi}]")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "kernels", k)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "w": self.w,
                "kernels": [k.ravel().tolist() for k in self.kernels],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "KernelBank":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"kernel bank is not valid JSON: {e}") from e
        for key in ("n", "w", "kernels"):
            if key not in obj:
                raise FormatError(f"kernel bank missing key {key!r}")
        n, w = int(obj["n"]), int(obj["w"])
        rows = obj["kernels"]
        if len(rows) != n or any(len(r) != w * w for r in rows):
            raise FormatError("kernel bank payload does not match n and w")
        return cls(n=n, w=w, kernels=np.array(rows, dtype=np.float64).reshape(n, w, w))


def save_bank(path, bank: KernelBank) -> None:
    with open(path, "w") as f:
        f.write(bank.to_json())
        f.write("\n")


def load_bank(path) -> KernelBank:
    with open(path) as f:
        return KernelBank.from_json(f.read())


@dataclass(frozen=True, eq=False)
class Dataset:
    """Flattened sample pool: features (m, n), labels (m,), and the (slice,
    x, y) provenance of every row."""

    features: np.ndarray
    labels: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.uint8)
        prov = np.asarray(self.provenance, dtype=np.int64)
        if f.ndim != 2:
            raise ValidationError(f"features must be (m, n), got {f.shape}")
        m = f.shape[0]
        if lab.shape != (m,) or prov.shape != (m, 3):
            raise ValidationError("features, labels, and provenance row counts differ")
        if m and not np.all(lab <= 3):
            raise ValidationError("labels must be class codes in {0..3}")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "provenance", prov)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n(self):
        return self.features.shape[1]


def convolve_features(features: FeatureVolume, bank: KernelBank) -> FeatureVolume:
    """Convolve feature i of every slice with kernel i (zero padding)."""
    if bank.n != features.n:
        raise ValidationError(
            f"bank has {bank.n} kernels but features have {features.n} components"
        )
    X, Y, Z = features.dims
    out = np.empty_like(features.values)
    for z in range(Z):
        # backend convolves (P, Y, X) planes; slice arrays are [x, y]
        planes = np.ascontiguousarray(features.values[:, :, z, :].transpose(2, 1, 0))
        res = backend.conv_planes(planes, bank.kernels)
        out[:, :, z, :] = res.transpose(2, 1, 0)
    return FeatureVolume(dims=features.dims, feature_kind=features.feature_kind, values=out)


def flatten(features: FeatureVolume, labels) -> Dataset:
    """Pool every voxel into one sample, scanning z, then y, then x fastest."""
    if features.dims != labels.dims:
        raise ValidationError(
            f"feature dims {features.dims} != label dims {labels.dims}"
        )
    X, Y, Z = features.dims
    feats = features.values.transpose(2, 1, 0, 3).reshape(-1, features.n)
    labs = labels.labels.transpose(2, 1, 0).reshape(-1)
    zz, yy, xx = np.meshgrid(np.arange(Z), np.arange(Y), np.arange(X), indexing="ij")
    prov = np.stack([zz.ravel(), xx.ravel(), yy.ravel()], axis=1)
    return Dataset(features=feats, labels=labs, provenance=prov)


def gaussian_bank(n: int, w: int) -> KernelBank:
    """n identical unit-sum Gaussians, sigma = w/4, peaked at the center."""
    if w < 1 or w % 2 == 0:
        raise ValidationError(f"kernel width must be odd and >= 1, got {w}")
    r = w // 2
    sigma = w / 4.0
    yy, xx = np.meshgrid(np.arange(w) - r, np.arange(w) - r, indexing="ij")
    k = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
    k /= k.sum()
    return KernelBank(n=n, w=w, kernels=np.repeat(k[None], n, axis=0))


def delta_bank(n: int, w: int) -> KernelBank:
    """n identity kernels: 1 at the center, 0 elsewhere (conv is a no-op)."""
    if w < 1 or w % 2 == 0:
        raise ValidationError(f"kernel width must be odd and >= 1, got {w}")
    k = np.zeros((n, w, w))
    k[:, w // 2, w // 2] = 1.0
    return KernelBank(n=n, w=w, kernels=k)
