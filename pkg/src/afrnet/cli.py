"""Batch command-line front end for the pipeline.

Stages write their artifacts under ``--out`` so later stages (and the
ablation grid) can reuse them::

    afrnet gen-data        --out run --seed 7
    afrnet prototypes      --out run
    afrnet select-features --out run
    afrnet train           --out run --mode residual --selection on
    afrnet synthesize      --out run --per-class 300
    afrnet evaluate        --out run [--gzsl]
    afrnet ablate          --out run
    afrnet report          --out run

Every stage echoes its fully resolved configuration (no paths) into a
JSON manifest; re-running the pipeline from an echoed configuration
reproduces every reported number exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from . import kernels
from .classifier import (
    EvaluationReport,
    SoftmaxConfig,
    evaluate_gzsl,
    evaluate_zsl,
    prototype_purity,
    residual_ratio,
    softmax_fit,
)
from .data import (
    Dataset,
    SyntheticBenchmarkConfig,
    generate_synthetic_benchmark,
    load_dataset,
    load_labels,
    load_matrix,
    save_dataset,
    save_labels,
    save_matrix,
)
from .errors import AfrnetError, DataError
from .gan import GanConfig, load_checkpoint, save_checkpoint, synthesize_dataset, train
from .prototype import (
    PrototypeTable,
    SvrConfig,
    apply_selection,
    compute_prototypes,
    fit_prototype_predictor,
    pca_fit,
    predict_prototypes,
    select_features,
)


@dataclass
class RunConfig:
    """Every pipeline knob, JSON-round-trippable, defaults everywhere."""

    seed: int = 0
    mode: str = "residual"
    selection: bool = True
    gzsl: bool = False
    per_class: int = 300
    pca_dim: int | None = None       # None -> min(semantic_dim, seen_classes - 1)
    selection_k: int | None = None   # None -> half the visual dimensionality
    dataset: SyntheticBenchmarkConfig = field(default_factory=SyntheticBenchmarkConfig)
    svr: SvrConfig = field(default_factory=SvrConfig)
    gan: GanConfig = field(default_factory=GanConfig)
    classifier: SoftmaxConfig = field(default_factory=SoftmaxConfig)

    def resolved(self) -> "RunConfig":
        """Push the master seed and mode down into the stage configs."""
        return replace(
            self,
            dataset=replace(self.dataset, seed=self.seed),
            gan=replace(self.gan, seed=self.seed + 1, mode=self.mode),
        )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        kwargs = {k: d[k] for k in
                  ("seed", "mode", "selection", "gzsl", "per_class", "pca_dim", "selection_k")
                  if k in d}
        if "dataset" in d:
            kwargs["dataset"] = SyntheticBenchmarkConfig(**d["dataset"])
        if "svr" in d:
            kwargs["svr"] = SvrConfig(**d["svr"])
        if "gan" in d:
            kwargs["gan"] = GanConfig(**d["gan"])
        if "classifier" in d:
            kwargs["classifier"] = SoftmaxConfig(**d["classifier"])
        return cls(**kwargs)


def _load_config(args) -> RunConfig:
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        config = RunConfig.from_dict(json.loads(path.read_text()))
    else:
        config = RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.mode is not None:
        config.mode = args.mode
    if args.selection is not None:
        config.selection = args.selection == "on"
    if args.gzsl:
        config.gzsl = True
    if args.k is not None:
        config.selection_k = args.k
    if args.gp_lambda is not None:
        config.gan = replace(config.gan, gp_lambda=args.gp_lambda)
    if args.iters is not None:
        config.gan = replace(config.gan, iterations=args.iters)
    if args.per_class is not None:
        config.per_class = args.per_class
    return config.resolved()


def _write_manifest(out: Path, stage: str, config: RunConfig, **extra):
    payload = {"stage": stage, "config": config.to_dict(), **extra}
    (out / f"{stage}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DataError(f"{hint} not found: {path} (run the earlier stages first)")
    return path


def _selection_indices(out: Path) -> np.ndarray:
    payload = json.loads(_require(out / "selected_indices.json", "selection file").read_text())
    return np.asarray(payload["indices"], dtype=np.int64)


def _predicted_table(out: Path, selection: np.ndarray | None) -> PrototypeTable:
    matrix = load_matrix(_require(out / "predicted_prototypes.afrm", "predicted prototypes"))
    table = PrototypeTable(np.arange(matrix.shape[0]), matrix)
    if selection is not None:
        table = table.with_selection(selection).compact()
    return table


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_synthetic_benchmark(config.dataset)
    save_dataset(out / "data", dataset)
    _write_manifest(out, "gen-data", config,
                    samples=int(dataset.features.shape[0]),
                    classes=int(dataset.num_classes))
    print(f"generated {dataset.features.shape[0]} samples over {dataset.num_classes} classes")
    return 0


def cmd_prototypes(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    dataset = load_dataset(out / "data")
    train_feats, train_labels = dataset.train_data()
    seen_protos = compute_prototypes(train_feats, train_labels, dataset.seen)
    seen_semantics = dataset.semantics[seen_protos.class_ids]
    pca_dim = config.pca_dim
    if pca_dim is None:
        pca_dim = min(dataset.semantics.shape[1], dataset.seen.size - 1)
    pca = pca_fit(seen_semantics, pca_dim)
    bank = fit_prototype_predictor(seen_protos, seen_semantics, config.svr, pca)
    predicted = predict_prototypes(bank, dataset.semantics)
    save_matrix(out / "seen_prototypes.afrm", seen_protos.matrix)
    save_matrix(out / "predicted_prototypes.afrm", predicted.matrix)
    save_matrix(out / "prediction_errors.afrm", bank.errors[None, :])
    kkt_max = max(m.kkt for m in bank.models)
    _write_manifest(out, "prototypes", config,
                    pca_dim=pca_dim,
                    gamma=bank.models[0].gamma,
                    kkt_max=kkt_max,
                    backend=kernels.BACKEND)
    print(f"fitted {bank.dim} regressors (pca {seen_semantics.shape[1]}->{pca_dim}, "
          f"max KKT violation {kkt_max:.2e})")
    return 0


def cmd_select_features(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    errors = load_matrix(_require(out / "prediction_errors.afrm", "prediction errors")).ravel()
    k = config.selection_k if config.selection_k is not None else errors.size // 2
    indices = select_features(errors, k)
    payload = {"k": int(k), "indices": [int(i) for i in indices], "config": config.to_dict()}
    (out / "selected_indices.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"selected {k} of {errors.size} dimensions: {indices.tolist()}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    dataset = load_dataset(out / "data")
    train_feats, train_labels = dataset.train_data()
    selection = _selection_indices(out) if config.selection else None
    if selection is not None:
        train_feats = apply_selection(train_feats, selection)
    prototypes = None
    if config.mode == "residual":
        prototypes = _predicted_table(out, selection)
    model = train(train_feats, train_labels, dataset.semantics, config.gan, prototypes)
    save_checkpoint(out / "gan.afrg", model)
    with open(out / "loss_history.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["step", "critic_objective", "generator_loss",
                                                "gradient_penalty", "zero_norm_rows"])
        writer.writeheader()
        writer.writerows(model.history)
    last = model.history[-1] if model.history else {}
    _write_manifest(out, "train", config,
                    feature_dim=model.feature_dim,
                    final=last)
    print(f"trained {config.mode} model for {config.gan.iterations} steps "
          f"on {train_feats.shape[1]} feature dims")
    return 0


def cmd_synthesize(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    dataset = load_dataset(out / "data")
    model = load_checkpoint(_require(out / "gan.afrg", "checkpoint"))
    selection = _selection_indices(out) if config.selection else None
    prototypes = _predicted_table(out, selection) if config.mode == "residual" else None
    rng = np.random.default_rng(config.seed + 2)
    feats, labels = synthesize_dataset(
        model, dataset.unseen, dataset.semantics[dataset.unseen],
        prototypes, config.per_class, rng,
    )
    save_matrix(out / "synthetic_features.afrm", feats)
    save_labels(out / "synthetic_labels.csv", labels)
    _write_manifest(out, "synthesize", config, rows=int(feats.shape[0]))
    print(f"synthesized {feats.shape[0]} rows ({config.per_class} per unseen class)")
    return 0


def _evaluate(config: RunConfig, out: Path) -> EvaluationReport:
    dataset = load_dataset(out / "data")
    synth_feats = load_matrix(_require(out / "synthetic_features.afrm", "synthetic features"))
    synth_labels = load_labels(_require(out / "synthetic_labels.csv", "synthetic labels"))
    selection = _selection_indices(out) if config.selection else None

    test_unseen_feats, test_unseen_labels = dataset.test_unseen_data()
    if selection is not None:
        test_unseen_feats = apply_selection(test_unseen_feats, selection)

    diagnostics = {}
    if config.mode == "residual":
        table = _predicted_table(out, selection)
        unseen_table = PrototypeTable(dataset.unseen, table.rows_for(dataset.unseen))
        diagnostics["purity"] = prototype_purity(synth_feats, synth_labels, unseen_table)
        residuals = synth_feats - unseen_table.rows_for(synth_labels)
        _, _, ratio = residual_ratio(residuals, unseen_table)
        diagnostics["residual_ratio"] = ratio

    if config.gzsl:
        train_feats, train_labels = dataset.train_data()
        if selection is not None:
            train_feats = apply_selection(train_feats, selection)
        fit_feats = np.concatenate([train_feats, synth_feats], axis=0)
        fit_labels = np.concatenate([train_labels, synth_labels])
        model = softmax_fit(fit_feats, fit_labels, config.classifier,
                            classes=np.union1d(dataset.seen, dataset.unseen))
        test_seen_feats, test_seen_labels = dataset.test_seen_data()
        if selection is not None:
            test_seen_feats = apply_selection(test_seen_feats, selection)
        return evaluate_gzsl(
            model, test_seen_feats, test_seen_labels,
            test_unseen_feats, test_unseen_labels,
            dataset.seen, dataset.unseen,
            seed=config.seed, config=config.to_dict(), **diagnostics,
        )
    model = softmax_fit(synth_feats, synth_labels, config.classifier, classes=dataset.unseen)
    return evaluate_zsl(
        model, test_unseen_feats, test_unseen_labels, dataset.unseen,
        seed=config.seed, config=config.to_dict(), **diagnostics,
    )


def _print_report(report: EvaluationReport):
    rows = [("unseen acc (U)", f"{report.u_acc:.2f}")]
    if report.s_acc is not None:
        rows.append(("seen acc (S)", f"{report.s_acc:.2f}"))
        rows.append(("harmonic mean (H)", f"{report.h_mean:.2f}"))
    if report.purity is not None:
        rows.append(("synthetic purity", f"{report.purity:.3f}"))
    if report.residual_ratio is not None:
        rows.append(("residual ratio", f"{report.residual_ratio:.3f}"))
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    report = _evaluate(config, out)
    (out / "report.json").write_text(report.to_json() + "\n")
    _print_report(report)
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    path = _require(out / "report.json", "report")
    report = EvaluationReport.from_json(path.read_text())
    _print_report(report)
    return 0


def cmd_ablate(args) -> int:
    """Mode and selection grids, on shared cached stages.

    Emits one row per (evaluator, mode, selection) cell; the 1NN rows
    classify real unseen test features against the predicted prototypes
    directly, without any generative step.
    """
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    base_argv = ["--out", str(out), "--seed", str(config.seed)]
    if not (out / "data").is_dir():
        cmd_gen_data(_parse(["gen-data"] + base_argv + _passthrough(args)))
    if not (out / "predicted_prototypes.afrm").exists():
        cmd_prototypes(_parse(["prototypes"] + base_argv + _passthrough(args)))
    if not (out / "selected_indices.json").exists():
        cmd_select_features(_parse(["select-features"] + base_argv + _passthrough(args)))

    dataset = load_dataset(out / "data")
    selection = _selection_indices(out)
    rows = []

    # nearest-prototype evaluator, with and without selection
    test_feats, test_labels = dataset.test_unseen_data()
    for use_sel in (False, True):
        table = _predicted_table(out, selection if use_sel else None)
        unseen_table = PrototypeTable(dataset.unseen, table.rows_for(dataset.unseen))
        feats = apply_selection(test_feats, selection) if use_sel else test_feats
        report = evaluate_zsl(unseen_table, feats, test_labels, dataset.unseen)
        rows.append({"evaluator": "1nn", "mode": "-",
                     "selection": "on" if use_sel else "off",
                     "unseen_acc": report.u_acc})

    # generative evaluator: baseline vs residual, selection off and on
    cells = [("baseline", False), ("residual", False), ("residual", True)]
    for mode, use_sel in cells:
        cell = replace(config, mode=mode, selection=use_sel, gzsl=False).resolved()
        cell_out = out / "ablate" / f"{mode}-{'sel' if use_sel else 'nosel'}"
        cell_out.mkdir(parents=True, exist_ok=True)
        _link_stage_outputs(out, cell_out)
        train_args = _parse(["train", "--out", str(cell_out), "--seed", str(config.seed),
                             "--mode", mode, "--selection", "on" if use_sel else "off"]
                            + _passthrough(args))
        cmd_train(train_args)
        synth_args = _parse(["synthesize", "--out", str(cell_out), "--seed", str(config.seed),
                             "--mode", mode, "--selection", "on" if use_sel else "off"]
                            + _passthrough(args))
        cmd_synthesize(synth_args)
        report = _evaluate(cell, cell_out)
        (cell_out / "report.json").write_text(report.to_json() + "\n")
        rows.append({"evaluator": "softmax", "mode": mode,
                     "selection": "on" if use_sel else "off",
                     "unseen_acc": report.u_acc})

    with open(out / "ablate.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["evaluator", "mode", "selection", "unseen_acc"])
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest(out, "ablate", config, cells=rows)

    print(f"{'evaluator':<10}{'mode':<10}{'selection':<11}unseen acc")
    for row in rows:
        print(f"{row['evaluator']:<10}{row['mode']:<10}{row['selection']:<11}{row['unseen_acc']:.2f}")
    return 0


def _link_stage_outputs(src: Path, dst: Path):
    # cells reuse the shared data/prototypes/selection stage outputs
    if not (dst / "data").exists():
        shutil.copytree(src / "data", dst / "data")
    for name in ("seen_prototypes.afrm", "predicted_prototypes.afrm",
                 "prediction_errors.afrm", "selected_indices.json"):
        if not (dst / name).exists():
            shutil.copy(src / name, dst / name)


def _passthrough(args) -> list:
    extra = []
    if args.config is not None:
        extra += ["--config", str(args.config)]
    if args.iters is not None:
        extra += ["--iters", str(args.iters)]
    if args.gp_lambda is not None:
        extra += ["--lambda", str(args.gp_lambda)]
    if args.k is not None:
        extra += ["--k", str(args.k)]
    if args.per_class is not None:
        extra += ["--per-class", str(args.per_class)]
    return extra


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

COMMANDS = {
    "gen-data": cmd_gen_data,
    "prototypes": cmd_prototypes,
    "select-features": cmd_select_features,
    "train": cmd_train,
    "synthesize": cmd_synthesize,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afrnet",
        description="Zero-shot feature synthesis pipeline (seeded, reproducible).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", default=None, help="JSON run-config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mode", choices=["baseline", "residual"], default=None)
        p.add_argument("--selection", choices=["on", "off"], default=None)
        p.add_argument("--gzsl", action="store_true", default=None)
        p.add_argument("--out", default="afrnet-run", help="run directory (default: afrnet-run)")
        p.add_argument("--k", type=int, default=None, help="selected dimension count")
        p.add_argument("--lambda", dest="gp_lambda", type=float, default=None)
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--per-class", dest="per_class", type=int, default=None)
    return parser


def _parse(argv):
    return build_parser().parse_args(argv)


def main(argv=None) -> int:
    args = _parse(argv if argv is not None else sys.argv[1:])
    try:
        return COMMANDS[args.command](args)
    except AfrnetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
