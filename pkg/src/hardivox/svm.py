"""Soft-margin Gaussian-kernel SVM trained by SMO, one-vs-one over 4 classes.

Each unordered class pair gets one binary trained on that pair's samples
(+1 = lower class code). Features are z-score normalized with statistics
fit on the training set only; the normalizer travels with the model.
Prediction tallies one vote per binary and breaks ties toward the lower
class code.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from . import backend
from .errors import FormatError, NumericalError, TrainingError, ValidationError
from .volumes import N_CLASSES

CLASS_PAIRS = tuple(
    (a, b) for a in range(N_CLASSES) for b in range(a + 1, N_CLASSES)
)

# Kernel-matrix caching thresholds (sample count per binary). Above the f32
# limit, kernel rows are recomputed on demand instead of cached.
_F64_CACHE_MAX = 3000
_F32_CACHE_MAX = 12000


@dataclass(frozen=True)
class SvmConfig:
    """SVM hyperparameters; gamma=None means 1/n resolved at training time."""

    C: float = 1.0
    gamma: float = None
    tolerance: float = 1e-3
    max_iter: int = None

    def __post_init__(self):
        if not self.C > 0:
            raise ValidationError(f"C must be > 0, got {self.C}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValidationError(f"gamma must be > 0, got {self.gamma}")
        if not self.tolerance > 0:
            raise ValidationError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {self.max_iter}")

    def resolve(self, n_features: int) -> "SvmConfig":
        gamma = self.gamma if self.gamma is not None else 1.0 / n_features
        return replace(self, gamma=gamma)


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-feature z-score statistics (population sigma, degenerate -> 1)."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if mu.shape != sigma.shape or mu.ndim != 1:
            raise ValidationError("mu and sigma must be matching 1D vectors")
        if not np.all(sigma > 0):
            raise ValidationError("sigma entries must be > 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mu) / self.sigma


def fit_normalizer(train) -> Normalizer:
    """Population mean/std per feature; std below 1e-12 is replaced by 1."""
    if len(train) == 0:
        raise ValidationError("cannot fit a normalizer on an empty dataset")
    mu = train.features.mean(axis=0)
    sigma = train.features.std(axis=0)
    sigma = np.where(sigma < 1e-12, 1.0, sigma)
    return Normalizer(mu=mu, sigma=sigma)


@dataclass(frozen=True, eq=False)
class BinarySvm:
    """One trained pair classifier: vote class_pos when f(x) > 0.

    A degenerate binary (one class absent at training) stores no support
    vectors and always votes const_vote.
    """

    class_pos: int
    class_neg: int
    support_vectors: np.ndarray
    coefficients: np.ndarray  # alpha_i * y_i of the kept support vectors
    bias: float
    gamma: float = 1.0
    degenerate: bool = False
    const_vote: int = None
    n_iter: int = 0
    gap: float = 0.0

    def decide(self, Xn):
        """Decision values on already-normalized rows (p, n)."""
        if self.degenerate or len(self.support_vectors) == 0:
            return np.full(Xn.shape[0], self.bias)
        return backend.decision_values(
            np.ascontiguousarray(Xn),
            self.support_vectors,
            self.coefficients,
            self.bias,
            self.gamma,
        )


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Normalizer + 6 one-vs-one binaries + the resolved configuration."""

    normalizer: Normalizer
    binaries: tuple
    config: SvmConfig
    classes: tuple = tuple(range(N_CLASSES))

    def __post_init__(self):
        want = len(self.classes) * (len(self.classes) - 1) // 2
        if len(self.binaries) != want:
            raise ValidationError(
                f"expected {want} binaries for {len(self.classes)} classes, "
                f"got {len(self.binaries)}"
            )


def _auto_max_iter(m: int) -> int:
    # enough for convergence on real problems, small enough that a
    # pathological pair fails fast instead of hanging
    return max(100_000, 50 * m)


def _libsvm_bias(alpha, grad, y, C):
    """Offset from the final dual gradient, the reference-solver way: mean
    of -y*grad over free vectors, else the midpoint of the feasible range."""
    yg = y * grad
    free = (alpha > 0.0) & (alpha < C)
    if np.any(free):
        return float(-np.mean(yg[free]))
    up = ((alpha == 0.0) & (y > 0.0)) | ((alpha == C) & (y < 0.0))
    lo = ((alpha == 0.0) & (y < 0.0)) | ((alpha == C) & (y > 0.0))
    ub = np.min(yg[up]) if np.any(up) else np.inf
    lb = np.max(yg[lo]) if np.any(lo) else -np.inf
    if not np.isfinite(ub) or not np.isfinite(lb):
        return 0.0
    return float(-(ub + lb) / 2.0)


def _train_binary(Xn, labels, pair, config) -> BinarySvm:
    a, b = pair
    mask = (labels == a) | (labels == b)
    X = np.ascontiguousarray(Xn[mask])
    y = np.where(labels[mask] == a, 1.0, -1.0)
    m = len(y)
    if m == 0 or np.all(y == y[0]):
        vote = a if (m == 0 or y[0] == 1.0) else b
        return BinarySvm(
            class_pos=a,
            class_neg=b,
            support_vectors=np.zeros((0, Xn.shape[1])),
            coefficients=np.zeros(0),
            bias=1.0 if vote == a else -1.0,
            gamma=config.gamma,
            degenerate=True,
            const_vote=vote,
        )
    if np.all(X == X[0]):
        raise NumericalError(
            f"all samples of pair {pair} are identical; no separating "
            "geometry exists"
        )
    max_iter = config.max_iter if config.max_iter is not None else _auto_max_iter(m)
    if m <= _F64_CACHE_MAX:
        K = backend.rbf_kernel(X, X, config.gamma)
        alpha, grad, n_iter, gap = backend.smo_solve_cached(
            K, y, config.C, config.tolerance, max_iter
        )
    elif m <= _F32_CACHE_MAX:
        X32 = X.astype(np.float32)
        K = backend.rbf_kernel(X32, X32, np.float32(config.gamma))
        alpha, grad, n_iter, gap = backend.smo_solve_cached(
            K, y, config.C, config.tolerance, max_iter
        )
    else:
        alpha, grad, n_iter, gap = backend.smo_solve_rows(
            X, y, config.gamma, config.C, config.tolerance, max_iter
        )
    if gap > config.tolerance:
        raise TrainingError(
            f"SMO did not converge on pair {pair}: gap {gap:.3e} after "
            f"{n_iter} iterations (cap {max_iter})"
        )
    bias = _libsvm_bias(alpha, grad, y, config.C)
    sv = alpha > 1e-12
    return BinarySvm(
        class_pos=a,
        class_neg=b,
        support_vectors=np.ascontiguousarray(X[sv]),
        coefficients=alpha[sv] * y[sv],
        bias=bias,
        gamma=config.gamma,
        n_iter=int(n_iter),
        gap=float(gap),
    )


def train_svm(train, config: SvmConfig = SvmConfig()) -> SvmModel:
    """Fit the normalizer on `train`, then one binary per class pair."""
    if len(train) == 0:
        raise ValidationError("cannot train on an empty dataset")
    present = np.unique(train.labels)
    if len(present) < 2:
        raise ValidationError(
            f"training needs >= 2 distinct classes, got {present.tolist()}"
        )
    cfg = config.resolve(train.n)
    norm = fit_normalizer(train)
    Xn = norm.apply(train.features)
    binaries = tuple(
        _train_binary(Xn, train.labels, pair, cfg) for pair in CLASS_PAIRS
    )
    return SvmModel(normalizer=norm, binaries=binaries, config=cfg)


def predict_batch(model: SvmModel, X) -> np.ndarray:
    """Class codes for raw (unnormalized) feature rows (p, n)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.normalizer.mu):
        raise ValidationError(
            f"expected (p, {len(model.normalizer.mu)}) features, got {X.shape}"
        )
    Xn = model.normalizer.apply(X)
    votes = np.zeros((X.shape[0], len(model.classes)), dtype=np.int64)
    for binary in model.binaries:
        if binary.degenerate:
            votes[:, binary.const_vote] += 1
            continue
        f = binary.decide(Xn)
        pos = f > 0.0
        votes[pos, binary.class_pos] += 1
        votes[~pos, binary.class_neg] += 1
    # argmax takes the first maximum: ties resolve to the lowest class code
    return np.argmax(votes, axis=1).astype(np.uint8)


def predict(model: SvmModel, x) -> int:
    """Class code for one raw feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError(f"expected a 1D feature vector, got shape {x.shape}")
    return int(predict_batch(model, x[None, :])[0])


def model_to_json(model: SvmModel) -> str:
    return json.dumps(
        {
            "config": {
                "C": model.config.C,
                "gamma": model.config.gamma,
                "tolerance": model.config.tolerance,
                "max_iter": model.config.max_iter,
            },
            "classes": list(model.classes),
            "normalizer": {
                "mu": model.normalizer.mu.tolist(),
                "sigma": model.normalizer.sigma.tolist(),
            },
            "binaries": [
                {
                    "pair": [b.class_pos, b.class_neg],
                    "degenerate": b.degenerate,
                    "const_vote": b.const_vote,
                    "support_vectors": b.support_vectors.tolist(),
                    "coefficients": b.coefficients.tolist(),
                    "bias": b.bias,
                    "n_iter": b.n_iter,
                    "gap": b.gap,
                }
                for b in model.binaries
            ],
        }
    )


def model_from_json(text: str) -> SvmModel:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"model file is not valid JSON: {e}") from e
    try:
        cfg = SvmConfig(**obj["config"])
        norm = Normalizer(
            mu=np.array(obj["normalizer"]["mu"]),
            sigma=np.array(obj["normalizer"]["sigma"]),
        )
        n = len(norm.mu)
        binaries = []
        for rec in obj["binaries"]:
            sv = np.array(rec["support_vectors"], dtype=np.float64).reshape(-1, n)
            binaries.append(
                BinarySvm(
                    class_pos=int(rec["pair"][0]),
                    class_neg=int(rec["pair"][1]),
                    support_vectors=sv,
                    coefficients=np.array(rec["coefficients"], dtype=np.float64),
                    bias=float(rec["bias"]),
                    gamma=cfg.gamma if cfg.gamma is not None else 1.0,
                    degenerate=bool(rec["degenerate"]),
                    const_vote=rec["const_vote"],
                    n_iter=int(rec.get("n_iter", 0)),
                    gap=float(rec.get("gap", 0.0)),
                )
            )
        return SvmModel(
            normalizer=norm,
            binaries=tuple(binaries),
            config=cfg,
            classes=tuple(obj["classes"]),
        )
    except (KeyError, TypeError, IndexError) as e:
        raise FormatError(f"model file is missing or misshaping fields: {e}") from e
