"""Shared synthetic test fixtures: label-coded toy volumes and wrappers."""

import numpy as np

from hardivox.filters import Dataset, flatten
from hardivox.volumes import FeatureVolume, LabelVolume


def toy_quadrant_volume(side=16):
    """Square slice split into four class quadrants.

    Feature 0 carries the class code itself (padded to the 3-component EIG
    layout), so a delta kernel makes the classes linearly separable and the
    optimum fitness is exactly zero.
    """
    dims = (side, side, 1)
    labels = np.zeros(dims, dtype=np.uint8)
    half = side // 2
    labels[half:, :half, 0] = 1
    labels[:half, half:, 0] = 2
    labels[half:, half:, 0] = 3
    vals = np.zeros(dims + (3,))
    vals[..., 0] = labels.astype(np.float64)
    feats = FeatureVolume(dims=dims, feature_kind="EIG", values=vals)
    return feats, LabelVolume(dims=dims, labels=labels)


def toy_dataset(side=16):
    feats, labels = toy_quadrant_volume(side)
    return flatten(feats, labels), feats, labels


def subset(ds, idx):
    return Dataset(features=ds.features[idx], labels=ds.labels[idx],
                   provenance=ds.provenance[idx])
