"""Grid, label, and gradient data types plus the two-file on-disk format.

A volume on disk is a pair ``<name>.json`` (sidecar: dims, kind, dtype and
whatever metadata the kind needs) and ``<name>.raw`` (little-endian blob,
x fastest, then y, then z, then component). Signals and features are stored
as 32-bit floats, labels as unsigned bytes. In memory grids are float64
indexed ``[x, y, z, ...]``; label grids are uint8.

Arrays handed to the constructors are adopted, not copied. Volumes are
treated as immutable after construction; mutate the payload and the
validation guarantees are off.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError

# Tissue class codes. Order matters: ties in one-vs-one voting and in the
# baseline's label fusion resolve toward the lower code.
CSF = 0
GM = 1
WMSF = 2
WMCF = 3
N_CLASSES = 4
CLASS_NAMES = ("CSF", "GM", "WMSF", "WMCF")

# Feature dimensionality by kind. SH orders 4 and 8 give (l+1)(l+2)/2 real
# even-order coefficients; EIG is the three sorted tensor eigenvalues; the
# RI variants keep one rotation-invariant energy per even degree.
FEATURE_DIMS = {
    "SH4": 15,
    "SH8": 45,
    "EIG": 3,
    "SH4RI": 3,
    "SH8RI": 5,
    "ODF4": 15,
    "ODF8": 45,
}


def _as_f64(a, name):
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class GradientTable:
    """Unit diffusion-encoding directions and the shared b-value (s/mm^2)."""

    directions: np.ndarray
    b_value: float

    def __post_init__(self):
        d = _as_f64(self.directions, "gradient directions")
        if d.ndim != 2 or d.shape[1] != 3:
            raise ValidationError(f"directions must be (m, 3), got {d.shape}")
        if d.shape[0] < 6:
            raise ValidationError(
                f"need at least 6 directions for a tensor fit, got {d.shape[0]}"
            )
        norms = np.sqrt(np.einsum("ij,ij->i", d, d))
        if np.any(np.abs(norms - 1.0) > 1e-6):
            worst = float(np.abs(norms - 1.0).max())
            raise ValidationError(f"directions must be unit length (max |.|-1 = {worst:g})")
        if not self.b_value > 0:
            raise ValidationError(f"b_value must be > 0, got {self.b_value}")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "b_value", float(self.b_value))

    def __len__(self):
        return self.directions.shape[0]


def _check_dims(dims):
    dims = tuple(int(v) for v in dims)
    if len(dims) != 3 or any(v < 1 for v in dims):
        raise ValidationError(f"dims must be three positive extents, got {dims}")
    return dims


@dataclass(frozen=True, eq=False)
class DwiVolume:
    """Diffusion-weighted volume: baseline s0 plus one grid per direction."""

    dims: tuple
    voxel_size: float
    s0: np.ndarray
    signal: np.ndarray
    gradients: GradientTable

    def __post_init__(self):
        dims = _check_dims(self.dims)
        if not self.voxel_size > 0:
            raise ValidationError(f"voxel_size must be > 0, got {self.voxel_size}")
        s0 = _as_f64(self.s0, "s0")
        sig = _as_f64(self.signal, "signal")
        if s0.shape != dims:
            raise ValidationError(f"s0 shape {s0.shape} != dims {dims}")
        if sig.shape != dims + (len(self.gradients),):
            raise ValidationError(
                f"signal shape {sig.shape} != dims + n_gradients "
                f"{dims + (len(self.gradients),)}"
            )
        if not np.all(s0 > 0):
            raise ValidationError("all s0 values must be > 0")
        if not np.all(sig >= 0):
            raise ValidationError("all signal values must be >= 0")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "signal", sig)


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Per-voxel tissue class codes (CSF=0, GM=1, WMSF=2, WMCF=3)."""

    dims: tuple
    labels: np.ndarray

    def __post_init__(self):
        dims = _check_dims(self.dims)
        lab = np.asarray(self.labels)
        if lab.shape != dims:
            raise ValidationError(f"labels shape {lab.shape} != dims {dims}")
        f = np.asarray(lab, dtype=np.float64)
        if not np.all(np.isfinite(f)) or np.any(f != np.round(f)):
            raise ValidationError("labels must be integer class codes")
        if not np.isin(f, (CSF, GM, WMSF, WMCF)).all():
            raise ValidationError("labels must all be in {0, 1, 2, 3}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", f.astype(np.uint8))


@dataclass(frozen=True, eq=False)
class FeatureVolume:
    """Per-voxel feature vectors of one of the known kinds."""

    dims: tuple
    feature_kind: str
    values: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        dims = _check_dims(self.dims)
        if self.feature_kind not in FEATURE_DIMS:
            raise ValidationError(
                f"unknown feature_kind {self.feature_kind!r}; "
                f"expected one of {sorted(FEATURE_DIMS)}"
            )
        n = FEATURE_DIMS[self.feature_kind]
        vals = _as_f64(self.values, "feature values")
        if vals.shape != dims + (n,):
            raise ValidationError(
                f"values shape {vals.shape} != dims + ({n},) for {self.feature_kind}"
            )
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "n", n)


def _strip_pair_suffix(path):
    base, ext = os.path.splitext(str(path))
    return base if ext in (".json", ".raw") else str(path)


def _blob_3d(grid):
    # x fastest, then y, then z: C-order ravel of the (Z, Y, X) transpose
    return np.ascontiguousarray(grid.transpose(2, 1, 0))


def write_volume(path, volume) -> None:
    """Write ``<path>.json`` + ``<path>.raw``; a trailing .json/.raw on
    ``path`` is ignored. Payload is revalidated so a volume mutated after
    construction cannot reach disk."""
    prefix = _strip_pair_suffix(path)
    if isinstance(volume, DwiVolume):
        volume.__post_init__()  # revalidate adopted arrays
        meta = {
            "kind": "dwi",
            "dims": list(volume.dims),
            "voxel_size_mm": volume.voxel_size,
            "b_value": volume.gradients.b_value,
            "gradients": [[float(c) for c in g] for g in volume.gradients.directions],
            "dtype": "f32le",
        }
        blocks = [_blob_3d(volume.s0).astype("<f4")]
        for g in range(len(volume.gradients)):
            blocks.append(_blob_3d(volume.signal[:, :, :, g]).astype("<f4"))
        blob = b"".join(b.tobytes() for b in blocks)
    elif isinstance(volume, FeatureVolume):
        volume.__post_init__()
        meta = {
            "kind": "features",
            "dims": list(volume.dims),
            "feature_kind": volume.feature_kind,
            "dtype": "f32le",
        }
        # component slowest: (n, Z, Y, X) C-order
        blob = (
            np.ascontiguousarray(volume.values.transpose(3, 2, 1, 0))
            .astype("<f4")
            .tobytes()
        )
    elif isinstance(volume, LabelVolume):
        volume.__post_init__()
        meta = {"kind": "labels", "dims": list(volume.dims), "dtype": "u8"}
        blob = _blob_3d(volume.labels).astype(np.uint8).tobytes()
    else:
        raise ValidationError(f"cannot write object of type {type(volume).__name__}")

    with open(prefix + ".json", "w") as f:
        json.dump(meta, f, indent=1)
        f.write("\n")
    with open(prefix + ".raw", "wb") as f:
        f.write(blob)


def _require(meta, key):
    if key not in meta:
        raise FormatError(f"sidecar missing key {key!r}")
    return meta[key]


def read_volume(path):
    """Read a two-file volume back into its typed form.

    Returns DwiVolume, FeatureVolume, or LabelVolume depending on the
    sidecar's "kind". Any violated type invariant raises before a value
    escapes.
    """
    prefix = _strip_pair_suffix(path)
    try:
        with open(prefix + ".json") as f:
            meta = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"sidecar is not valid JSON: {e}") from e
    if not isinstance(meta, dict):
        raise FormatError("sidecar must be a JSON object")
    with open(prefix + ".raw", "rb") as f:
        blob = f.read()

    kind = _require(meta, "kind")
    dims = _check_dims(_require(meta, "dims"))
    X, Y, Z = dims
    nvox = X * Y * Z
    dtype = _require(meta, "dtype")

    if kind == "dwi":
        if dtype != "f32le":
            raise FormatError(f"dwi volumes must be f32le, got {dtype!r}")
        grads = np.asarray(_require(meta, "gradients"), dtype=np.float64)
        table = GradientTable(directions=grads, b_value=float(_require(meta, "b_value")))
        G = len(table)
        expect = nvox * (1 + G) * 4
        if len(blob) != expect:
            raise FormatError(f"blob is {len(blob)} bytes, header implies {expect}")
        flat = np.frombuffer(blob, dtype="<f4").astype(np.float64)
        s0 = flat[:nvox].reshape(Z, Y, X).transpose(2, 1, 0)
        sig = np.empty(dims + (G,))
        for g in range(G):
            block = flat[nvox * (1 + g) : nvox * (2 + g)]
            sig[:, :, :, g] = block.reshape(Z, Y, X).transpose(2, 1, 0)
        return DwiVolume(
            dims=dims,
            voxel_size=float(meta.get("voxel_size_mm", 1.0)),
            s0=s0,
            signal=sig,
            gradients=table,
        )
    if kind == "features":
        if dtype != "f32le":
            raise FormatError(f"feature volumes must be f32le, got {dtype!r}")
        fk = _require(meta, "feature_kind")
        if fk not in FEATURE_DIMS:
            raise FormatError(f"unknown feature_kind {fk!r}")
        n = FEATURE_DIMS[fk]
        expect = nvox * n * 4
        if len(blob) != expect:
            raise FormatError(f"blob is {len(blob)} bytes, header implies {expect}")
        flat = np.frombuffer(blob, dtype="<f4").astype(np.float64)
        vals = flat.reshape(n, Z, Y, X).transpose(3, 2, 1, 0)
        return FeatureVolume(dims=dims, feature_kind=fk, values=vals)
    if kind == "labels":
        if dtype != "u8":
            raise FormatError(f"label volumes must be u8, got {dtype!r}")
        if len(blob) != nvox:
            raise FormatError(f"blob is {len(blob)} bytes, header implies {nvox}")
        lab = np.frombuffer(blob, dtype=np.uint8).reshape(Z, Y, X).transpose(2, 1, 0)
        return LabelVolume(dims=dims, labels=lab)
    raise FormatError(f"unknown volume kind {kind!r}")


def load_gradients_text(path, b_value=1500.0) -> GradientTable:
    """Load one ``x y z`` triple per line; normalizes each to unit length.

    Blank lines and lines starting with # are skipped. A zero vector has no
    direction and is rejected.
    """
    rows = []
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{ln}: expected 3 numbers, got {len(parts)}")
            try:
                v = np.array([float(p) for p in parts])
            except ValueError as e:
                raise FormatError(f"{path}:{ln}: {e}") from e
            norm = float(np.linalg.norm(v))
            if norm < 1e-12:
                raise ValidationError(f"{path}:{ln}: zero gradient vector")
            rows.append(v / norm)
    if not rows:
        raise FormatError(f"{path}: no gradient directions found")
    return GradientTable(directions=np.array(rows), b_value=b_value)
