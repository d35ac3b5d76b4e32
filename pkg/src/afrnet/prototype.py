"""Class prototypes and their prediction from semantic features.

A class's visual prototype is the mean of its feature rows. One
epsilon-SVR with an RBF kernel is trained per visual dimension to map
(PCA-reduced) semantic vectors to that dimension of the prototype; the
per-dimension training errors then rank dimensions for the top-K
selection that defines the compact feature space.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import as_matrix
from .errors import ContractError, DataError, DimensionError, SolverError


@dataclass
class PrototypeTable:
    """One prototype row per class, sorted by class id.

    ``selected`` optionally carries the index list of the compact view;
    the matrix itself stays full-width until ``compact()`` is taken.
    """

    class_ids: np.ndarray
    matrix: np.ndarray
    selected: np.ndarray | None = None

    def __post_init__(self):
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        self.matrix = as_matrix(self.matrix, "prototype matrix")
        if self.class_ids.ndim != 1 or self.class_ids.size != self.matrix.shape[0]:
            raise DimensionError(
                f"{self.class_ids.size} class ids for {self.matrix.shape[0]} prototype rows"
            )
        if np.unique(self.class_ids).size != self.class_ids.size:
            raise DataError("duplicate class ids in prototype table")
        order = np.argsort(self.class_ids)
        self.class_ids = self.class_ids[order]
        self.matrix = np.ascontiguousarray(self.matrix[order])
        if self.selected is not None:
            self.selected = np.asarray(self.selected, dtype=np.int64)
            _check_selection(self.selected, self.matrix.shape[1])

    @property
    def dim(self):
        return self.matrix.shape[1]

    def row_for(self, class_id) -> np.ndarray:
        idx = np.searchsorted(self.class_ids, class_id)
        if idx >= self.class_ids.size or self.class_ids[idx] != class_id:
            raise DataError(f"no prototype for class {class_id}")
        return self.matrix[idx]

    def rows_for(self, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        idx = np.searchsorted(self.class_ids, labels)
        bad = (idx >= self.class_ids.size) | (self.class_ids[np.minimum(idx, self.class_ids.size - 1)] != labels)
        if bad.any():
            missing = np.unique(labels[bad])
            raise DataError(f"no prototype for class(es) {missing.tolist()}")
        return self.matrix[idx]

    def compact(self) -> "PrototypeTable":
        """The table restricted to its selected dimensions (identity if none)."""
        if self.selected is None:
            return self
        return PrototypeTable(self.class_ids, apply_selection(self.matrix, self.selected))

    def with_selection(self, indices) -> "PrototypeTable":
        return PrototypeTable(self.class_ids, self.matrix, np.asarray(indices, dtype=np.int64))


def compute_prototypes(features, labels, class_ids=None) -> PrototypeTable:
    """Per-class arithmetic mean of the feature rows.

    ``class_ids`` pins the expected class set; a listed class with no
    samples is a data error.
    """
    features = as_matrix(features, "features")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size != features.shape[0]:
        raise DimensionError(f"{labels.size} labels for {features.shape[0]} feature rows")
    if labels.size == 0:
        raise DataError("no samples to build prototypes from")
    ids = np.unique(labels) if class_ids is None else np.unique(np.asarray(class_ids, dtype=np.int64))
    rows = np.empty((ids.size, features.shape[1]))
    for r, cid in enumerate(ids):
        members = features[labels == cid]
        if members.shape[0] == 0:
            raise DataError(f"class {cid} has no samples")
        rows[r] = members.mean(axis=0)
    return PrototypeTable(ids, rows)


# ---------------------------------------------------------------------------
# PCA (cyclic Jacobi on the covariance)
# ---------------------------------------------------------------------------


@dataclass
class PcaModel:
    """Mean vector plus orthonormal component rows (top eigenvectors)."""

    mean: np.ndarray
    components: np.ndarray  # (target_dim, input_dim)

    @property
    def in_dim(self):
        return self.mean.size

    @property
    def out_dim(self):
        return self.components.shape[0]


def pca_fit(semantics, target_dim) -> PcaModel:
    """Top eigenvectors of the centered covariance, sign-fixed.

    Requires target_dim <= min(rows - 1, cols). The sign convention makes
    the largest-magnitude entry of each component positive.
    """
    x = as_matrix(semantics, "semantics")
    n, d = x.shape
    if not (1 <= target_dim <= min(n - 1, d)):
        raise DimensionError(
            f"target_dim {target_dim} out of range for {n} rows x {d} cols "
            f"(max {min(n - 1, d)})"
        )
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / (n - 1)
    _, vecs = kernels.jacobi_eigh(cov)
    comps = np.ascontiguousarray(vecs[:, :target_dim].T)
    for r in range(comps.shape[0]):
        lead = np.argmax(np.abs(comps[r]))
        if comps[r, lead] < 0:
            comps[r] = -comps[r]
    return PcaModel(mean, comps)


def pca_transform(model: PcaModel, semantics) -> np.ndarray:
    x = as_matrix(semantics, "semantics")
    if x.shape[1] != model.in_dim:
        raise DimensionError(f"semantics have {x.shape[1]} columns, PCA expects {model.in_dim}")
    return (x - model.mean) @ model.components.T


# ---------------------------------------------------------------------------
# Epsilon-SVR with RBF kernel
# ---------------------------------------------------------------------------


def rbf_kernel(a, b, gamma) -> float:
    """exp(-gamma * ||a - b||^2)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise DimensionError(f"vector lengths differ: {a.size} vs {b.size}")
    if gamma < 0:
        raise ContractError(f"gamma must be >= 0, got {gamma}")
    return float(kernels.rbf_kernel_matrix(a[None, :], b[None, :], gamma)[0, 0])


@dataclass
class SvrConfig:
    """Hyper-parameters of one epsilon-SVR fit.

    ``gamma=None`` resolves to 1 / (input_dim * mean feature variance).
    The per-sample dual cap is alpha / C, matching a slack penalty that
    averages over the C training rows.
    """

    alpha: float = 1.0
    delta: float = 0.1
    gamma: float | None = None
    tol: float = 1e-6
    max_iter: int = 100_000

    def resolve_gamma(self, inputs: np.ndarray) -> float:
        if self.gamma is not None:
            return self.gamma
        var = float(inputs.var(axis=0).mean())
        if var <= 0:
            return 1.0 / inputs.shape[1]
        return 1.0 / (inputs.shape[1] * var)


@dataclass
class SvrModel:
    """Dual-difference coefficients over the stored training inputs."""

    coef: np.ndarray          # beta - beta_bar per training row
    bias: float
    gamma: float
    delta: float
    alpha: float
    inputs: np.ndarray        # training inputs in the reduced space
    kkt: float = 0.0
    dual_objective: float = 0.0
    updates: int = 0


def svr_fit(inputs, targets, config: SvrConfig | None = None) -> SvrModel:
    """Solve the epsilon-SVR dual by SMO to the configured KKT tolerance."""
    config = config or SvrConfig()
    inputs = as_matrix(inputs, "inputs")
    targets = np.asarray(targets, dtype=np.float64).ravel()
    c = inputs.shape[0]
    if c < 2:
        raise DataError(f"need at least 2 training rows, got {c}")
    if targets.size != c:
        raise DimensionError(f"{targets.size} targets for {c} rows")
    if config.alpha <= 0:
        raise ContractError(f"alpha must be > 0, got {config.alpha}")
    if config.delta < 0:
        raise ContractError(f"delta must be >= 0, got {config.delta}")
    gamma = config.resolve_gamma(inputs)
    kmat = kernels.rbf_kernel_matrix(inputs, inputs, gamma)
    cap = config.alpha / c
    res = kernels.smo_epsilon_svr(kmat, targets, cap, config.delta, config.tol, config.max_iter)
    if not res["converged"]:
        raise SolverError(
            f"SVR did not converge in {config.max_iter} pair updates "
            f"(KKT residual {res['kkt']:.3e})"
        )
    return SvrModel(
        coef=res["theta"], bias=res["bias"], gamma=gamma,
        delta=config.delta, alpha=config.alpha, inputs=inputs.copy(),
        kkt=res["kkt"], dual_objective=res["objective"], updates=res["updates"],
    )


def svr_predict(model: SvrModel, e) -> float | np.ndarray:
    """Kernel expansion sum_c coef_c * k(e, e_c) + bias.

    Accepts a single vector (returns a float) or a matrix of rows.
    """
    e = np.asarray(e, dtype=np.float64)
    single = e.ndim == 1
    if single:
        e = e[None, :]
    if e.shape[1] != model.inputs.shape[1]:
        raise DimensionError(
            f"input has {e.shape[1]} columns, model expects {model.inputs.shape[1]}"
        )
    kvec = kernels.rbf_kernel_matrix(e, model.inputs, model.gamma)
    out = kvec @ model.coef + model.bias
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Per-dimension predictor bank and feature selection
# ---------------------------------------------------------------------------


@dataclass
class PredictorBank:
    """One SvrModel per visual dimension plus the shared PCA reduction.

    ``errors[j]`` is the summed squared training error of dimension j's
    regressor over the training classes.
    """

    models: list
    pca: PcaModel | None
    errors: np.ndarray
    class_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def dim(self):
        return len(self.models)


def _fit_dimension(j, inputs, targets, config):
    try:
        model = svr_fit(inputs, targets, config)
    except SolverError as exc:
        raise SolverError(f"dimension {j}: {exc}") from exc
    preds = svr_predict(model, inputs)
    err = float(np.sum((preds - targets) ** 2))
    return model, err


def fit_prototype_predictor(
    prototypes: PrototypeTable,
    semantics,
    config: SvrConfig | None = None,
    pca: PcaModel | None = None,
    n_jobs: int = 1,
) -> PredictorBank:
    """Train one SVR per prototype dimension on the reduced semantics.

    ``semantics`` must have one row per prototype row (same class order).
    Fits are independent, so ``n_jobs > 1`` fans them out over threads;
    the assembled bank is identical to a sequential fit.
    """
    config = config or SvrConfig()
    semantics = as_matrix(semantics, "semantics")
    if semantics.shape[0] != prototypes.matrix.shape[0]:
        raise DimensionError(
            f"{semantics.shape[0]} semantic rows for {prototypes.matrix.shape[0]} prototypes"
        )
    reduced = pca_transform(pca, semantics) if pca is not None else semantics
    v = prototypes.dim
    jobs = [(j, reduced, prototypes.matrix[:, j], config) for j in range(v)]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda args: _fit_dimension(*args), jobs))
    else:
        results = [_fit_dimension(*args) for args in jobs]
    models = [r[0] for r in results]
    errors = np.array([r[1] for r in results])
    return PredictorBank(models, pca, errors, prototypes.class_ids.copy())


def predict_prototypes(bank: PredictorBank, semantics, class_ids=None) -> PrototypeTable:
    """Predict one prototype row per semantic row.

    Rows may be given in the reduced space or in the raw space when the
    bank carries a PCA model.
    """
    semantics = as_matrix(semantics, "semantics")
    reduced_dim = bank.models[0].inputs.shape[1]
    if bank.pca is not None and semantics.shape[1] == bank.pca.in_dim:
        # raw rows win the tie when the PCA keeps the full dimensionality
        reduced = pca_transform(bank.pca, semantics)
    elif semantics.shape[1] == reduced_dim:
        reduced = semantics
    else:
        raise DimensionError(
            f"semantics have {semantics.shape[1]} columns; expected the reduced "
            f"dimensionality {reduced_dim}" + ("" if bank.pca is None else f" or raw {bank.pca.in_dim}")
        )
    out = np.empty((reduced.shape[0], bank.dim))
    for j, model in enumerate(bank.models):
        out[:, j] = svr_predict(model, reduced)
    ids = np.arange(reduced.shape[0]) if class_ids is None else np.asarray(class_ids, dtype=np.int64)
    return PrototypeTable(ids, out)


def select_features(bank_or_errors, k: int | None = None) -> np.ndarray:
    """Indices of the k best-predicted dimensions, ascending by error.

    Ties break toward the lower dimension index. ``k`` defaults to half
    the dimensionality (floor).
    """
    errors = bank_or_errors.errors if isinstance(bank_or_errors, PredictorBank) else np.asarray(bank_or_errors, dtype=np.float64)
    v = errors.size
    if k is None:
        k = v // 2
    if not (1 <= k <= v):
        raise ContractError(f"k must be in [1, {v}], got {k}")
    order = np.argsort(errors, kind="stable")
    return order[:k].astype(np.int64)


def apply_selection(matrix, indices) -> np.ndarray:
    """Column-sliced copy in index order."""
    matrix = as_matrix(matrix, "matrix")
    indices = np.asarray(indices, dtype=np.int64)
    _check_selection(indices, matrix.shape[1])
    return np.ascontiguousarray(matrix[:, indices])


def _check_selection(indices, width):
    if indices.ndim != 1 or indices.size == 0:
        raise ContractError("selection must be a non-empty 1-D index list")
    if indices.min() < 0 or indices.max() >= width:
        raise DimensionError(f"selection index out of range for width {width}")
    if np.unique(indices).size != indices.size:
        raise ContractError("selection indices must be unique")
