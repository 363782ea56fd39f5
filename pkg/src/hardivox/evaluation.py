"""Stratified cross-validation, white-matter error ratios, the weighted
fitness they combine into, and the classification-time estimator.

The three ratios each measure one failure mode against its population at
risk: MWMR (missed WM) and EWMR (exchanged WM) are normalized by the count
of true WM voxels, IWMR (imagined WM) by true non-WM voxels. The scalar
fitness is alpha*MWMR + beta*EWMR + gamma_w*IWMR; lower is better.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .svm import SvmConfig, predict_batch, train_svm
from .volumes import CSF, GM, N_CLASSES, WMCF, WMSF

REFERENCE_VOXELS = 3 * 64 * 64  # the per-run calibration volume of the estimator


@dataclass(frozen=True)
class FitnessWeights:
    """Eq-style weights; gamma_w named to avoid clashing with the SVM gamma."""

    alpha: float = 1.5
    beta: float = 1.0
    gamma_w: float = 2.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma_w < 0:
            raise ValidationError("fitness weights must all be >= 0")


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Pooled confusion matrix (rows = truth, cols = predicted) + ratios."""

    confusion: np.ndarray
    mwmr: float
    ewmr: float
    iwmr: float
    fitness: float
    global_error: float
    merged_global_error: float
    degenerate: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "confusion": self.confusion.tolist(),
                "mwmr": self.mwmr,
                "ewmr": self.ewmr,
                "iwmr": self.iwmr,
                "fitness": self.fitness,
                "global_error": self.global_error,
                "merged_global_error": self.merged_global_error,
                "degenerate": self.degenerate,
            }
        )


def confusion_matrix(truth, predicted) -> np.ndarray:
    t = np.asarray(truth).ravel().astype(np.int64)
    p = np.asarray(predicted).ravel().astype(np.int64)
    if t.shape != p.shape:
        raise ValidationError(f"truth {t.shape} and predicted {p.shape} differ")
    if t.size == 0:
        raise ValidationError("cannot evaluate zero samples")
    if t.min() < 0 or t.max() >= N_CLASSES or p.min() < 0 or p.max() >= N_CLASSES:
        raise ValidationError("labels out of the 4-class code range")
    return np.bincount(t * N_CLASSES + p, minlength=N_CLASSES * N_CLASSES).reshape(
        N_CLASSES, N_CLASSES
    )


def metrics_from_confusion(confusion, weights: FitnessWeights) -> EvalReport:
    c = np.asarray(confusion, dtype=np.int64)
    total = int(c.sum())
    wm_truth = int(c[WMSF].sum() + c[WMCF].sum())
    nwm_truth = int(c[CSF].sum() + c[GM].sum())
    degenerate = wm_truth == 0 or nwm_truth == 0

    missed = int(c[WMSF, CSF] + c[WMSF, GM] + c[WMCF, CSF] + c[WMCF, GM])
    exchanged = int(c[WMSF, WMCF] + c[WMCF, WMSF])
    imagined = int(c[CSF, WMSF] + c[CSF, WMCF] + c[GM, WMSF] + c[GM, WMCF])

    mwmr = missed / wm_truth if wm_truth else 0.0
    ewmr = exchanged / wm_truth if wm_truth else 0.0
    iwmr = imagined / nwm_truth if nwm_truth else 0.0
    fitness = weights.alpha * mwmr + weights.beta * ewmr + weights.gamma_w * iwmr

    correct = int(np.trace(c))
    merged_correct = correct + int(c[CSF, GM] + c[GM, CSF])
    return EvalReport(
        confusion=c,
        mwmr=mwmr,
        ewmr=ewmr,
        iwmr=iwmr,
        fitness=fitness,
        global_error=1.0 - correct / total,
        merged_global_error=1.0 - merged_correct / total,
        degenerate=degenerate,
    )


def compute_metrics(truth, predicted, weights: FitnessWeights = FitnessWeights()):
    return metrics_from_confusion(confusion_matrix(truth, predicted), weights)


def _canonical_order(dataset):
    """Sample indices sorted by (z, y, x) provenance, so fold composition is
    a function of voxel identity rather than dataset row order."""
    prov = dataset.provenance
    return np.lexsort((prov[:, 1], prov[:, 2], prov[:, 0]))


def stratified_folds(dataset, k: int, seed: int):
    """k disjoint index sets with per-class counts differing by at most 1.

    Within each class, samples (in canonical provenance order) are shuffled
    by a class-keyed seeded stream and dealt round-robin. Reordering the
    dataset's rows therefore permutes indices but not which voxels share a
    fold.
    """
    if k < 2:
        raise ValidationError(f"need at least 2 folds, got {k}")
    order = _canonical_order(dataset)
    labels = dataset.labels
    folds = [[] for _ in range(k)]
    for cls in np.unique(labels):
        members = order[labels[order] == cls]
        if len(members) < k:
            raise ValidationError(
                f"class {int(cls)} has {len(members)} samples, fewer than k={k}"
            )
        rng = np.random.default_rng([int(seed), int(cls)])
        members = members[rng.permutation(len(members))]
        for f in range(k):
            folds[f].append(members[f::k])
    return [np.sort(np.concatenate(parts)) for parts in folds]


def cross_validate(
    dataset,
    config: SvmConfig = SvmConfig(),
    weights: FitnessWeights = FitnessWeights(),
    k: int = 6,
    seed: int = 0,
    folds=None,
):
    """Train on k-1 folds, predict the held-out fold, pool all predictions.

    The normalizer is refit inside each fold's training split only. Pass
    precomputed `folds` to amortize stratification across many calls.
    """
    from .filters import Dataset  # local import: filters also imports svm users

    if folds is None:
        folds = stratified_folds(dataset, k, seed)
    m = len(dataset)
    order = _canonical_order(dataset)
    rank = np.empty(m, dtype=np.int64)
    rank[order] = np.arange(m)
    predicted = np.full(m, 255, dtype=np.uint8)
    for held in folds:
        mask = np.zeros(m, dtype=bool)
        mask[held] = True
        train_idx = np.flatnonzero(~mask)
        # canonical order: training is then independent of dataset row order
        train_idx = train_idx[np.argsort(rank[train_idx], kind="stable")]
        train = Dataset(
            features=dataset.features[train_idx],
            labels=dataset.labels[train_idx],
            provenance=dataset.provenance[train_idx],
        )
        model = train_svm(train, config)
        predicted[held] = predict_batch(model, dataset.features[held])
    if np.any(predicted == 255):
        raise ValidationError("folds do not cover the dataset")
    return compute_metrics(dataset.labels, predicted, weights)


def estimate_classification_time(v, per_run_seconds: float = 1.5) -> float:
    """Overestimated wall time to classify v voxels, scaled from the
    reference 3*64*64-voxel run."""
    if v < 0:
        raise ValidationError(f"voxel count must be >= 0, got {v}")
    return per_run_seconds * v / REFERENCE_VOXELS


# label rendering ------------------------------------------------------------

PALETTE = np.zeros((N_CLASSES, 3), dtype=np.uint8)
PALETTE[CSF] = (0, 0, 255)
PALETTE[GM] = (128, 128, 128)
PALETTE[WMSF] = (0, 255, 0)
PALETTE[WMCF] = (255, 0, 0)
ERROR_COLOR = np.array((255, 255, 255), dtype=np.uint8)


def write_ppm(path, rgb) -> None:
    """Binary PPM (P6) writer for (H, W, 3) uint8 images."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValidationError(f"expected (H, W, 3) image, got {rgb.shape}")
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (rgb.shape[1], rgb.shape[0]))
        f.write(rgb.tobytes())


def render_comparison(predicted, truth, z: int) -> np.ndarray:
    """Three side-by-side panels for slice z: predicted | truth | errors.

    Rows are y (top row y=0), columns x. Errors panel paints misclassified
    voxels white on black.
    """
    if predicted.dims != truth.dims:
        raise ValidationError("predicted and truth dims differ")
    X, Y, Z = truth.dims
    if not 0 <= z < Z:
        raise ValidationError(f"slice {z} out of range for {Z} slices")
    pred = predicted.labels[:, :, z].T  # (Y, X)
    tru = truth.labels[:, :, z].T
    img = np.zeros((Y, 3 * X + 2, 3), dtype=np.uint8)
    img[:, :X] = PALETTE[pred]
    img[:, X + 1 : 2 * X + 1] = PALETTE[tru]
    err = np.zeros((Y, X, 3), dtype=np.uint8)
    err[pred != tru] = ERROR_COLOR
    img[:, 2 * X + 2 :] = err
    return img
