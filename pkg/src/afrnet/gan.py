"""Conditional Wasserstein GAN with gradient penalty over feature rows.

Two training modes share one code path. In residual mode the generator
output is a per-sample deviation that gets added to the class prototype;
baseline mode is literally the same loop with an all-zero prototype
table, so the two coincide bit for bit when the prototypes vanish.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import (
    AdamState,
    MlpParams,
    Tape,
    adam_init,
    adam_step,
    add,
    as_matrix,
    backward,
    bind,
    concat_cols,
    forward_nodes,
    init_mlp,
    mean_all,
    mlp_forward,
    mul,
    penalty_nodes,
)
from .errors import ContractError, DataError, DimensionError, FileFormatError, TrainingError
from .prototype import PrototypeTable

CHECKPOINT_MAGIC = b"AFRG"
CHECKPOINT_VERSION = 1


@dataclass
class GanConfig:
    """Training configuration; the defaults are the desk-scale ones.

    ``hidden_units`` is 64 here; the full-scale setting is 4096. The
    optimizer triple (1e-4, 0.0, 0.9) and lambda=10 with 5 critic steps
    follow the usual gradient-penalty recipe. ``noise_dim=None`` resolves
    to the conditioning width at train time.
    """

    noise_dim: int | None = None
    hidden_units: int = 64
    gp_lambda: float = 10.0
    critic_steps: int = 5
    learning_rate: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    batch_size: int = 64
    iterations: int = 2000
    mode: str = "residual"
    seed: int = 0

    def __post_init__(self):
        if self.gp_lambda < 0:
            raise ContractError(f"gp_lambda must be >= 0, got {self.gp_lambda}")
        if self.critic_steps < 1:
            raise ContractError(f"critic_steps must be >= 1, got {self.critic_steps}")
        if self.mode not in ("baseline", "residual"):
            raise ContractError(f"mode must be 'baseline' or 'residual', got {self.mode!r}")
        if self.batch_size < 1 or self.iterations < 0:
            raise ContractError("batch_size must be >= 1 and iterations >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class GanModel:
    """Generator/discriminator parameters plus optimizer state and history."""

    generator: MlpParams
    discriminator: MlpParams
    gen_state: AdamState
    disc_state: AdamState
    config: GanConfig
    iteration: int = 0
    history: list = field(default_factory=list)

    @property
    def noise_dim(self):
        return self.generator.in_dim - self.cond_dim

    @property
    def cond_dim(self):
        # D sees (feature, condition); G sees (noise, condition)
        return self.discriminator.in_dim - self.feature_dim

    @property
    def feature_dim(self):
        return self.generator.out_dim


def sample_noise(n, dim, rng) -> np.ndarray:
    """n x dim standard-normal draws from the given generator."""
    if n < 1 or dim < 1:
        raise ContractError(f"noise batch must be at least 1x1, got {n}x{dim}")
    return rng.standard_normal((n, dim))


def generate_residuals(generator: MlpParams, z, semantics) -> np.ndarray:
    """Generator applied to the concatenated (noise, condition) rows."""
    z = as_matrix(z, "noise")
    semantics = as_matrix(semantics, "semantics")
    if z.shape[0] != semantics.shape[0]:
        raise DimensionError(f"noise rows {z.shape[0]} != semantic rows {semantics.shape[0]}")
    return mlp_forward(generator, np.concatenate([z, semantics], axis=1))


def synthesize_features(residuals, prototype_rows) -> np.ndarray:
    """Element-wise residual + prototype."""
    residuals = as_matrix(residuals, "residuals")
    prototype_rows = as_matrix(prototype_rows, "prototype rows")
    if residuals.shape != prototype_rows.shape:
        raise DimensionError(f"shape mismatch: {residuals.shape} vs {prototype_rows.shape}")
    return residuals + prototype_rows


def interpolate(x_real, x_synth, rng) -> np.ndarray:
    """Per-row convex combination with a fresh uniform(0,1) weight per row."""
    x_real = as_matrix(x_real, "x_real")
    x_synth = as_matrix(x_synth, "x_synth")
    if x_real.shape != x_synth.shape:
        raise DimensionError(f"shape mismatch: {x_real.shape} vs {x_synth.shape}")
    zeta = rng.random((x_real.shape[0], 1))
    return zeta * x_real + (1.0 - zeta) * x_synth


@dataclass
class CriticObjective:
    """Critic objective value (the maximized form) and descent gradients.

    ``value`` is  E[D(real)] - E[D(synth)] - lambda * penalty;  ``grads``
    are the gradients of its negation, ready for a descent step on D.
    """

    value: float
    grads: list
    penalty: float
    zero_norm_rows: int


def critic_objective(disc: MlpParams, x_real, x_synth, x_bar, semantics, gp_lambda) -> CriticObjective:
    x_real = as_matrix(x_real, "x_real")
    x_synth = as_matrix(x_synth, "x_synth")
    x_bar = as_matrix(x_bar, "x_bar")
    semantics = as_matrix(semantics, "semantics")
    for name, m in (("x_real", x_real), ("x_synth", x_synth), ("x_bar", x_bar)):
        if m.shape != x_real.shape:
            raise DimensionError(f"{name} shape {m.shape} != {x_real.shape}")
        if m.shape[0] != semantics.shape[0]:
            raise DimensionError(f"{name} rows {m.shape[0]} != semantic rows {semantics.shape[0]}")
    tape = Tape()
    nodes = bind(tape, disc)
    cond = tape.constant(semantics, "condition")
    d_real = forward_nodes(nodes, concat_cols(tape.constant(x_real, "x_real"), cond))
    d_synth = forward_nodes(nodes, concat_cols(tape.constant(x_synth, "x_synth"), cond))
    pen, zero_rows = penalty_nodes(nodes, tape.constant(x_bar, "x_bar"), cond, gp_lambda)
    wasserstein = add(mean_all(d_real), mul(mean_all(d_synth), -1.0))
    objective = add(wasserstein, mul(pen, -1.0))
    loss = mul(objective, -1.0)
    value = float(objective.value[0, 0])
    if not np.isfinite(value):
        raise TrainingError("non-finite critic objective")
    return CriticObjective(value, backward(tape, loss), float(pen.value[0, 0]), zero_rows)


@dataclass
class GeneratorObjective:
    """Generator loss -E[D(synth)] and its gradients."""

    value: float
    grads: list


def generator_objective(gen: MlpParams, disc: MlpParams, z, semantics, prototype_rows=None) -> GeneratorObjective:
    z = as_matrix(z, "noise")
    semantics = as_matrix(semantics, "semantics")
    if z.shape[0] != semantics.shape[0]:
        raise DimensionError(f"noise rows {z.shape[0]} != semantic rows {semantics.shape[0]}")
    if prototype_rows is None:
        prototype_rows = np.zeros((z.shape[0], gen.out_dim))
    prototype_rows = as_matrix(prototype_rows, "prototype rows")
    tape = Tape()
    gen_nodes = bind(tape, gen)
    disc_nodes = bind(tape, disc, trainable=False)
    cond = tape.constant(semantics, "condition")
    residual = forward_nodes(gen_nodes, concat_cols(tape.constant(z, "noise"), cond))
    synth = add(residual, tape.constant(prototype_rows, "prototypes"))
    loss = mul(mean_all(forward_nodes(disc_nodes, concat_cols(synth, cond))), -1.0)
    value = float(loss.value[0, 0])
    if not np.isfinite(value):
        raise TrainingError("non-finite generator loss")
    return GeneratorObjective(value, backward(tape, loss))


def train(features, labels, semantics, config: GanConfig, prototypes: PrototypeTable | None = None) -> GanModel:
    """Alternate critic/generator updates for ``config.iterations`` steps.

    ``features`` are the (already column-selected, if selection is in
    force) seen-class training rows; ``semantics`` has one row per class
    id. Residual mode requires a prototype row for every seen class;
    baseline mode runs the identical loop with zero prototypes.
    """
    features = as_matrix(features, "features")
    labels = np.asarray(labels, dtype=np.int64)
    semantics = as_matrix(semantics, "semantics")
    if features.shape[0] == 0:
        raise DataError("no training rows")
    if labels.size != features.shape[0]:
        raise DimensionError(f"{labels.size} labels for {features.shape[0]} rows")
    if labels.min() < 0 or labels.max() >= semantics.shape[0]:
        raise DataError("a label has no semantic row")
    feat_dim = features.shape[1]
    cond_dim = semantics.shape[1]
    proto_by_class = np.zeros((semantics.shape[0], feat_dim))
    if config.mode == "residual":
        if prototypes is None:
            raise ContractError("residual mode requires a prototype table")
        if prototypes.dim != feat_dim:
            raise DimensionError(
                f"prototype width {prototypes.dim} != feature width {feat_dim}"
            )
        seen_ids = np.unique(labels)
        proto_by_class[seen_ids] = prototypes.rows_for(seen_ids)

    noise_dim = config.noise_dim if config.noise_dim is not None else cond_dim
    rng = np.random.default_rng(config.seed)
    gen = init_mlp(noise_dim + cond_dim, config.hidden_units, feat_dim, rng)
    disc = init_mlp(feat_dim + cond_dim, config.hidden_units, 1, rng)
    gen_state = adam_init(gen.to_list(), config.learning_rate, config.beta1, config.beta2)
    disc_state = adam_init(disc.to_list(), config.learning_rate, config.beta1, config.beta2)

    history = []
    n = features.shape[0]
    for step in range(1, config.iterations + 1):
        try:
            for _ in range(config.critic_steps):
                idx = rng.integers(0, n, size=config.batch_size)
                x = features[idx]
                e = semantics[labels[idx]]
                p = proto_by_class[labels[idx]]
                z = sample_noise(config.batch_size, noise_dim, rng)
                x_synth = synthesize_features(generate_residuals(gen, z, e), p)
                x_bar = interpolate(x, x_synth, rng)
                crit = critic_objective(disc, x, x_synth, x_bar, e, config.gp_lambda)
                new_disc, disc_state = adam_step(disc.to_list(), crit.grads, disc_state)
                disc = MlpParams.from_list(new_disc)
            idx = rng.integers(0, n, size=config.batch_size)
            e = semantics[labels[idx]]
            p = proto_by_class[labels[idx]]
            z = sample_noise(config.batch_size, noise_dim, rng)
            gobj = generator_objective(gen, disc, z, e, p)
            new_gen, gen_state = adam_step(gen.to_list(), gobj.grads, gen_state)
            gen = MlpParams.from_list(new_gen)
        except TrainingError as exc:
            raise TrainingError(f"step {step}: {exc}", step=step) from exc
        history.append(
            {
                "step": step,
                "critic_objective": crit.value,
                "generator_loss": gobj.value,
                "gradient_penalty": crit.penalty,
                "zero_norm_rows": crit.zero_norm_rows,
            }
        )
    return GanModel(gen, disc, gen_state, disc_state, config, config.iterations, history)


def synthesize_dataset(model: GanModel, class_ids, class_semantics, prototypes, per_class_count, rng):
    """Draw ``per_class_count`` synthetic feature rows per class.

    ``class_semantics`` has one row per entry of ``class_ids``. In
    residual mode ``prototypes`` must cover every class; pass None in
    baseline mode. Returns (features, labels) with labels in contiguous
    per-class blocks.
    """
    class_ids = np.asarray(class_ids, dtype=np.int64)
    class_semantics = as_matrix(class_semantics, "class semantics")
    if class_ids.size != class_semantics.shape[0]:
        raise DimensionError(
            f"{class_ids.size} class ids for {class_semantics.shape[0]} semantic rows"
        )
    if per_class_count < 1:
        raise ContractError(f"per_class_count must be >= 1, got {per_class_count}")
    feat_dim = model.feature_dim
    out = np.empty((class_ids.size * per_class_count, feat_dim))
    labels = np.empty(class_ids.size * per_class_count, dtype=np.int64)
    for r, cid in enumerate(class_ids):
        if prototypes is not None:
            proto = prototypes.row_for(cid)
        else:
            proto = np.zeros(feat_dim)
        z = sample_noise(per_class_count, model.noise_dim, rng)
        e = np.tile(class_semantics[r], (per_class_count, 1))
        rows = synthesize_features(generate_residuals(model.generator, z, e), np.tile(proto, (per_class_count, 1)))
        out[r * per_class_count:(r + 1) * per_class_count] = rows
        labels[r * per_class_count:(r + 1) * per_class_count] = cid
    return out, labels


# ---------------------------------------------------------------------------
# Checkpoint file (magic "AFRG")
# ---------------------------------------------------------------------------


def save_checkpoint(path, model: GanModel):
    """Write config echo plus the twelve parameter matrices."""
    blob = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    matrices = model.generator.to_list() + model.discriminator.to_list()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(matrices)))
        for m in matrices:
            fh.write(struct.pack("<QQ", m.shape[0], m.shape[1]))
            fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())


def load_checkpoint(path) -> GanModel:
    """Rebuild a model from a checkpoint; optimizer state starts fresh."""
    with open(path, "rb") as fh:
        data = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise FileFormatError(f"truncated checkpoint {path}")
        chunk = data[off:off + n]
        off += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise FileFormatError(f"bad magic in {path}")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise FileFormatError(f"unsupported checkpoint version {version} in {path}")
    (blob_len,) = struct.unpack("<I", take(4))
    config = GanConfig.from_dict(json.loads(take(blob_len).decode("utf-8")))
    (count,) = struct.unpack("<I", take(4))
    if count != 12:
        raise FileFormatError(f"expected 12 parameter matrices, found {count} in {path}")
    matrices = []
    for _ in range(count):
        rows, cols = struct.unpack("<QQ", take(16))
        raw = take(rows * cols * 8)
        matrices.append(np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy())
    if off != len(data):
        raise FileFormatError(f"trailing bytes in {path}")
    gen = MlpParams.from_list(matrices[:6])
    disc = MlpParams.from_list(matrices[6:])
    return GanModel(
        gen, disc,
        adam_init(gen.to_list(), config.learning_rate, config.beta1, config.beta2),
        adam_init(disc.to_list(), config.learning_rate, config.beta1, config.beta2),
        config,
    )
