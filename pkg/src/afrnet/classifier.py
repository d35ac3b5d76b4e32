"""Softmax and nearest-prototype classification plus the ZSL/GZSL metrics.

Accuracy is always the class-balanced top-1: the mean over classes of
the within-class hit rate, in percent. Under the conventional protocol
candidates are restricted to the unseen classes; the generalized
protocol scores seen and unseen test splits over the full label space
and summarizes them with the harmonic mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import adam_init, adam_step, as_matrix
from .errors import ContractError, DataError, DimensionError
from .prototype import PrototypeTable


@dataclass
class SoftmaxConfig:
    learning_rate: float = 1e-3
    iterations: int = 2000
    tol: float = 1e-6

    def to_dict(self):
        return {"learning_rate": self.learning_rate, "iterations": self.iterations, "tol": self.tol}


@dataclass
class SoftmaxModel:
    """Linear scores per class; the last theta column is the bias."""

    theta: np.ndarray  # (num_classes, dim + 1)
    class_ids: np.ndarray

    def __post_init__(self):
        self.theta = as_matrix(self.theta, "theta")
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        if self.class_ids.size != self.theta.shape[0]:
            raise DimensionError(
                f"{self.class_ids.size} class ids for {self.theta.shape[0]} weight rows"
            )
        if np.unique(self.class_ids).size != self.class_ids.size:
            raise DataError("duplicate class ids")
        order = np.argsort(self.class_ids)
        self.class_ids = self.class_ids[order]
        self.theta = np.ascontiguousarray(self.theta[order])

    @property
    def dim(self):
        return self.theta.shape[1] - 1


def _augment(features):
    return np.concatenate([features, np.ones((features.shape[0], 1))], axis=1)


def softmax_loss_and_grad(theta, features_aug, label_idx):
    """Mean cross-entropy of the linear softmax and its theta gradient."""
    scores = features_aug @ theta.T
    scores -= scores.max(axis=1, keepdims=True)
    exp = np.exp(scores)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = features_aug.shape[0]
    loss = -float(np.mean(np.log(probs[np.arange(n), label_idx])))
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), label_idx] = 1.0
    grad = (probs - onehot).T @ features_aug / n
    return loss, grad


def softmax_fit(features, labels, config: SoftmaxConfig | None = None, classes=None) -> SoftmaxModel:
    """Full-batch Adam on the cross-entropy, from a zero start.

    Stops at the gradient-norm tolerance or the iteration cap. When
    ``classes`` is given, every listed class must appear in the labels.
    """
    config = config or SoftmaxConfig()
    features = as_matrix(features, "features")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size != features.shape[0]:
        raise DimensionError(f"{labels.size} labels for {features.shape[0]} rows")
    present = np.unique(labels)
    if classes is None:
        class_ids = present
    else:
        class_ids = np.unique(np.asarray(classes, dtype=np.int64))
        missing = np.setdiff1d(class_ids, present)
        if missing.size:
            raise DataError(f"class(es) {missing.tolist()} absent from training data")
        if np.setdiff1d(present, class_ids).size:
            raise DataError("labels outside the declared class set")
    if class_ids.size < 2:
        raise DataError(f"need at least 2 classes, got {class_ids.size}")
    label_idx = np.searchsorted(class_ids, labels)
    feats_aug = _augment(features)
    theta = np.zeros((class_ids.size, feats_aug.shape[1]))
    state = adam_init([theta], config.learning_rate)
    for _ in range(config.iterations):
        _, grad = softmax_loss_and_grad(theta, feats_aug, label_idx)
        if float(np.sqrt(np.sum(grad * grad))) <= config.tol:
            break
        (theta,), state = adam_step([theta], [grad], state)
    return SoftmaxModel(theta, class_ids)


def _restrict(class_ids, scores, candidates):
    if candidates is None:
        return class_ids, scores
    cand = np.unique(np.asarray(candidates, dtype=np.int64))
    keep = np.isin(class_ids, cand)
    if not keep.any():
        raise DataError("no candidate class is known to the model")
    return class_ids[keep], scores[:, keep]


def classify(model: SoftmaxModel, x, candidates=None):
    """Argmax class per row; ties go to the lowest class id.

    ``candidates`` restricts the argmax to a subset of the model's
    classes. A single vector in, a single id out.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    x = as_matrix(x, "features")
    if x.shape[1] != model.dim:
        raise DimensionError(f"input has {x.shape[1]} columns, model expects {model.dim}")
    scores = _augment(x) @ model.theta.T
    ids, scores = _restrict(model.class_ids, scores, candidates)
    picks = ids[np.argmax(scores, axis=1)]  # first max wins; ids ascend
    return int(picks[0]) if single else picks


def nn1_classify(prototypes: PrototypeTable, x, candidates=None):
    """Class of the L2-nearest prototype row; ties to the lowest class id."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    x = as_matrix(x, "features")
    if x.shape[1] != prototypes.dim:
        raise DimensionError(f"input has {x.shape[1]} columns, prototypes have {prototypes.dim}")
    d2 = (
        np.sum(x * x, axis=1, keepdims=True)
        - 2.0 * x @ prototypes.matrix.T
        + np.sum(prototypes.matrix * prototypes.matrix, axis=1)[None, :]
    )
    ids = prototypes.class_ids
    if candidates is not None:
        keep = np.isin(ids, np.unique(np.asarray(candidates, dtype=np.int64)))
        if not keep.any():
            raise DataError("no candidate class has a prototype")
        ids = ids[keep]
        d2 = d2[:, keep]
    picks = ids[np.argmin(d2, axis=1)]
    return int(picks[0]) if single else picks


def per_class_top1(predictions, labels, class_set) -> float:
    """Mean over classes of the within-class accuracy, in percent."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise DimensionError(f"{predictions.size} predictions for {labels.size} labels")
    classes = np.unique(np.asarray(list(class_set), dtype=np.int64))
    extra = np.setdiff1d(np.unique(labels), classes)
    if extra.size:
        raise DataError(f"labels contain class(es) {extra.tolist()} outside the class set")
    accs = []
    for cid in classes:
        members = labels == cid
        count = int(members.sum())
        if count == 0:
            raise DataError(f"class {cid} has no test samples")
        accs.append(float((predictions[members] == cid).sum()) / count)
    return 100.0 * float(np.mean(accs))


def harmonic_mean(u, s) -> float:
    """2US/(U+S); zero when both terms vanish."""
    if u < 0 or s < 0:
        raise ContractError(f"accuracies must be >= 0, got {u}, {s}")
    if u + s == 0:
        return 0.0
    return 2.0 * u * s / (u + s)


def prototype_purity(features, labels, prototypes: PrototypeTable) -> float:
    """Fraction of rows whose nearest prototype belongs to their own class."""
    features = as_matrix(features, "features")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size != features.shape[0]:
        raise DimensionError(f"{labels.size} labels for {features.shape[0]} rows")
    picks = nn1_classify(prototypes, features)
    return float(np.mean(picks == labels))


def residual_ratio(residuals, prototypes):
    """(median residual norm, median pairwise prototype distance, ratio)."""
    residuals = as_matrix(residuals, "residuals")
    matrix = prototypes.matrix if isinstance(prototypes, PrototypeTable) else as_matrix(prototypes, "prototypes")
    if matrix.shape[0] < 2:
        raise ContractError("need at least 2 prototypes for pairwise distances")
    if residuals.shape[1] != matrix.shape[1]:
        raise DimensionError(f"residual width {residuals.shape[1]} != prototype width {matrix.shape[1]}")
    res_norms = np.sqrt(np.sum(residuals * residuals, axis=1))
    dists = []
    for i in range(matrix.shape[0] - 1):
        diff = matrix[i + 1:] - matrix[i]
        dists.append(np.sqrt(np.sum(diff * diff, axis=1)))
    med_res = float(np.median(res_norms))
    med_dist = float(np.median(np.concatenate(dists)))
    ratio = med_res / med_dist if med_dist > 0 else float("inf")
    return med_res, med_dist, ratio


# ---------------------------------------------------------------------------
# Evaluation reports
# ---------------------------------------------------------------------------


@dataclass
class EvaluationReport:
    """Per-class accuracies with the U/S/H summary and run diagnostics."""

    per_class: dict
    u_acc: float
    s_acc: float | None = None
    h_mean: float | None = None
    purity: float | None = None
    residual_ratio: float | None = None
    seed: int | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for cid, acc in self.per_class.items():
            if not (0.0 <= acc <= 100.0):
                raise ContractError(f"accuracy for class {cid} out of range: {acc}")
        if self.s_acc is not None:
            expected = harmonic_mean(self.u_acc, self.s_acc)
            if self.h_mean is None:
                self.h_mean = expected
            elif self.h_mean != expected:
                raise ContractError(
                    f"harmonic mean {self.h_mean} inconsistent with U={self.u_acc}, S={self.s_acc}"
                )

    def to_dict(self):
        return {
            "u_acc": self.u_acc,
            "s_acc": self.s_acc,
            "h_mean": self.h_mean,
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "purity": self.purity,
            "residual_ratio": self.residual_ratio,
            "seed": self.seed,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            per_class={int(k): v for k, v in d["per_class"].items()},
            u_acc=d["u_acc"],
            s_acc=d.get("s_acc"),
            h_mean=d.get("h_mean"),
            purity=d.get("purity"),
            residual_ratio=d.get("residual_ratio"),
            seed=d.get("seed"),
            config=d.get("config", {}),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _predict(model_or_prototypes, features, candidates):
    if isinstance(model_or_prototypes, PrototypeTable):
        return nn1_classify(model_or_prototypes, features, candidates)
    return classify(model_or_prototypes, features, candidates)


def _per_class_dict(predictions, labels, classes):
    out = {}
    for cid in np.unique(np.asarray(list(classes), dtype=np.int64)):
        members = labels == cid
        count = int(members.sum())
        if count == 0:
            raise DataError(f"class {cid} has no test samples")
        out[int(cid)] = 100.0 * float((predictions[members] == cid).sum()) / count
    return out


def evaluate_zsl(model_or_prototypes, features, labels, unseen_classes, **report_fields) -> EvaluationReport:
    """Conventional protocol: candidates restricted to the unseen classes."""
    features = as_matrix(features, "test features")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise DataError("empty test split")
    preds = _predict(model_or_prototypes, features, unseen_classes)
    per_class = _per_class_dict(preds, labels, unseen_classes)
    u = float(np.mean(list(per_class.values())))
    return EvaluationReport(per_class=per_class, u_acc=u, **report_fields)


def evaluate_gzsl(
    model_or_prototypes,
    seen_features,
    seen_labels,
    unseen_features,
    unseen_labels,
    seen_classes,
    unseen_classes,
    **report_fields,
) -> EvaluationReport:
    """Generalized protocol: both splits scored over the full label space."""
    seen_features = as_matrix(seen_features, "seen test features")
    unseen_features = as_matrix(unseen_features, "unseen test features")
    seen_labels = np.asarray(seen_labels, dtype=np.int64)
    unseen_labels = np.asarray(unseen_labels, dtype=np.int64)
    if seen_labels.size == 0 or unseen_labels.size == 0:
        raise DataError("empty test split")
    all_classes = np.union1d(np.asarray(list(seen_classes)), np.asarray(list(unseen_classes)))
    preds_seen = _predict(model_or_prototypes, seen_features, all_classes)
    preds_unseen = _predict(model_or_prototypes, unseen_features, all_classes)
    per_class_seen = _per_class_dict(preds_seen, seen_labels, seen_classes)
    per_class_unseen = _per_class_dict(preds_unseen, unseen_labels, unseen_classes)
    s = float(np.mean(list(per_class_seen.values())))
    u = float(np.mean(list(per_class_unseen.values())))
    per_class = {**per_class_seen, **per_class_unseen}
    return EvaluationReport(per_class=per_class, u_acc=u, s_acc=s, **report_fields)
