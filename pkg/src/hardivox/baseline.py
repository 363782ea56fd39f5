"""Comparison classifier: per-feature-space SVMs fused by a final SVM.

Seven stage-1 classifiers, one per feature space, each with grid-searched
(C, gamma). Their predicted class codes form a 7-vector per voxel; a stage-2
SVM (or a majority vote) maps that vector to the final label. Stage-2
training vectors are strictly out-of-fold stage-1 predictions, never
in-sample ones.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import HardivoxError, TrainingError, ValidationError
from .evaluation import stratified_folds
from .filters import Dataset, flatten
from .svm import SvmConfig, SvmModel, predict_batch, train_svm

STAGE1_KINDS = ("SH4", "SH4RI", "SH8", "SH8RI", "EIG", "ODF4", "ODF8")

DEFAULT_C_GRID = tuple(2.0 ** e for e in range(-5, 10, 2))
DEFAULT_GAMMA_GRID = tuple(2.0 ** e for e in range(-15, 4, 2))


def grid_search(
    train: Dataset,
    C_grid=DEFAULT_C_GRID,
    gamma_grid=DEFAULT_GAMMA_GRID,
    k: int = 10,
    seed: int = 0,
) -> SvmConfig:
    """(C, gamma) minimizing pooled k-fold global error on shared folds.

    Ties break toward smaller C, then smaller gamma. A configuration whose
    training fails (e.g. non-convergence at a pathological gamma) scores
    +inf rather than aborting the search.
    """
    from .evaluation import FitnessWeights, cross_validate

    if not len(C_grid) or not len(gamma_grid):
        raise ValidationError("grids must be non-empty")
    folds = stratified_folds(train, k, seed)
    weights = FitnessWeights()
    best = None
    best_err = math.inf
    for C in sorted(C_grid):
        for gamma in sorted(gamma_grid):
            config = SvmConfig(C=C, gamma=gamma)
            try:
                report = cross_validate(
                    train, config, weights, k=k, seed=seed, folds=folds
                )
                err = report.global_error
            except HardivoxError:
                err = math.inf
            if err < best_err:
                best_err = err
                best = config
    if best is None or not math.isfinite(best_err):
        raise TrainingError("every grid point failed to train")
    return best


@dataclass(frozen=True, eq=False)
class FusionModel:
    """Stage-1 (kind, SvmModel) pairs in fixed order + the stage-2 fuser."""

    stage1: tuple  # ((feature_kind, SvmModel), ...)
    stage2: SvmModel
    vote_mode: bool = False

    def __post_init__(self):
        if not self.vote_mode:
            if self.stage2 is None:
                raise ValidationError("svm fusion requires a stage-2 model")
            if len(self.stage2.normalizer.mu) != len(self.stage1):
                raise ValidationError(
                    "stage-2 input dimensionality must equal the number of "
                    "stage-1 classifiers"
                )

    @property
    def kinds(self):
        return tuple(kind for kind, _ in self.stage1)


def _check_kinds(features_by_kind, kinds):
    missing = [k for k in kinds if k not in features_by_kind]
    if missing:
        raise ValidationError(f"missing feature kinds: {missing}")


def _stage1_code_matrix(model: FusionModel, features_by_kind):
    cols = []
    for kind, m in model.stage1:
        cols.append(predict_batch(m, features_by_kind[kind]).astype(np.float64))
    return np.stack(cols, axis=1)


def train_fusion(
    datasets_by_kind,
    vote_mode: bool = False,
    configs_by_kind=None,
    C_grid=DEFAULT_C_GRID,
    gamma_grid=DEFAULT_GAMMA_GRID,
    grid_k: int = 10,
    stacking_k: int = 10,
    seed: int = 0,
    kinds=STAGE1_KINDS,
) -> FusionModel:
    """Grid-search and train one SVM per feature space, then the fuser.

    `datasets_by_kind` maps feature kind to a Dataset over the same samples
    in the same order (labels must agree across kinds). Stage-2 trains on
    out-of-fold stage-1 label codes. Pass `configs_by_kind` to skip the
    grid search for some or all kinds.
    """
    _check_kinds(datasets_by_kind, kinds)
    labels = datasets_by_kind[kinds[0]].labels
    prov = datasets_by_kind[kinds[0]].provenance
    for kind in kinds:
        ds = datasets_by_kind[kind]
        if not np.array_equal(ds.labels, labels) or not np.array_equal(
            ds.provenance, prov
        ):
            raise ValidationError(f"kind {kind} disagrees on samples or order")

    configs = {}
    for kind in kinds:
        if configs_by_kind is not None and kind in configs_by_kind:
            configs[kind] = configs_by_kind[kind].resolve(datasets_by_kind[kind].n)
        else:
            configs[kind] = grid_search(
                datasets_by_kind[kind], C_grid, gamma_grid, k=grid_k, seed=seed
            )

    stage1 = tuple(
        (kind, train_svm(datasets_by_kind[kind], configs[kind])) for kind in kinds
    )

    if vote_mode:
        return FusionModel(stage1=stage1, stage2=None, vote_mode=True)

    # out-of-fold stage-1 codes: train each kind's SVM on k-1 folds, predict
    # the held-out fold, so the fuser never sees in-sample predictions
    any_ds = datasets_by_kind[kinds[0]]
    folds = stratified_folds(any_ds, stacking_k, seed)
    m = len(any_ds)
    codes = np.full((m, len(kinds)), -1.0)
    for held in folds:
        mask = np.zeros(m, dtype=bool)
        mask[held] = True
        train_idx = np.flatnonzero(~mask)
        for col, kind in enumerate(kinds):
            ds = datasets_by_kind[kind]
            sub = Dataset(
                features=ds.features[train_idx],
                labels=ds.labels[train_idx],
                provenance=ds.provenance[train_idx],
            )
            fold_model = train_svm(sub, configs[kind])
            codes[held, col] = predict_batch(fold_model, ds.features[held])
    if np.any(codes < 0):
        raise ValidationError("stacking folds did not cover the dataset")

    stage2_train = Dataset(features=codes, labels=labels, provenance=prov)
    stage2 = train_svm(stage2_train, SvmConfig())
    return FusionModel(stage1=stage1, stage2=stage2, vote_mode=False)


def predict_fusion_batch(model: FusionModel, features_by_kind) -> np.ndarray:
    """Fused class codes for matrices of per-kind raw features."""
    _check_kinds(features_by_kind, model.kinds)
    codes = _stage1_code_matrix(model, features_by_kind)
    if model.vote_mode:
        out = np.empty(codes.shape[0], dtype=np.uint8)
        for i, row in enumerate(codes.astype(np.int64)):
            counts = np.bincount(row, minlength=4)
            out[i] = np.argmax(counts)  # ties resolve to the lowest code
        return out
    return predict_batch(model.stage2, codes)


def predict_fusion(model: FusionModel, vectors_by_kind) -> int:
    """Fused class code for one voxel's per-kind feature vectors."""
    batches = {k: np.asarray(v, dtype=np.float64)[None, :] for k, v in vectors_by_kind.items()}
    return int(predict_fusion_batch(model, batches)[0])


def stage1_datasets(dwi, labels, lam: float = 0.006, kinds=STAGE1_KINDS):
    """Compute the seven stage-1 feature spaces from a DWI volume and flatten
    each against the labels (shared sample order across kinds)."""
    from .features import (
        fit_sh,
        fit_tensor_eigenvalues,
        rotation_invariant_features,
        sh_to_odf,
    )

    sh4 = fit_sh(dwi, 4, lam)
    sh8 = fit_sh(dwi, 8, lam)
    volumes = {
        "SH4": sh4,
        "SH8": sh8,
        "SH4RI": rotation_invariant_features(sh4),
        "SH8RI": rotation_invariant_features(sh8),
        "EIG": fit_tensor_eigenvalues(dwi),
        "ODF4": sh_to_odf(sh4),
        "ODF8": sh_to_odf(sh8),
    }
    return {kind: flatten(volumes[kind], labels) for kind in kinds}
