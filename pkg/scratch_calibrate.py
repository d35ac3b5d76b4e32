"""Dev-only calibration for the frozen-benchmark acceptance runs."""

import sys
import time

import numpy as np

from afrnet.classifier import (
    SoftmaxConfig, evaluate_zsl, prototype_purity, residual_ratio, softmax_fit,
)
from afrnet.data import SyntheticBenchmarkConfig, benchmark_ground_truth, generate_synthetic_benchmark
from afrnet.gan import GanConfig, synthesize_dataset, train
from afrnet.prototype import (
    PrototypeTable, SvrConfig, apply_selection, compute_prototypes,
    fit_prototype_predictor, pca_fit, predict_prototypes, select_features,
)

t0 = time.time()

def clock(msg):
    print(f"[{time.time()-t0:7.1f}s] {msg}", flush=True)


def run(data_seed=0, alpha=1.0, delta=0.1, iters=600, lr=1e-4, critic=5, hidden=64,
        batch=64, sigma_intra=0.3, sigma_inter=1.0, spc=30, per_class=300, pca_dim=None):
    cfg = SyntheticBenchmarkConfig(
        seen_classes=20, unseen_classes=5, samples_per_class=spc,
        visual_dim=32, semantic_dim=16, sigma_intra=sigma_intra,
        sigma_inter=sigma_inter, noise_fraction=0.5, seed=data_seed,
    )
    ds = generate_synthetic_benchmark(cfg)
    truth = benchmark_ground_truth(cfg)
    train_feats, train_labels = ds.train_data()
    test_feats, test_labels = ds.test_unseen_data()

    seen_protos = compute_prototypes(train_feats, train_labels, ds.seen)
    seen_sem = ds.semantics[seen_protos.class_ids]
    pd = pca_dim if pca_dim is not None else min(16, ds.seen.size - 1)
    pca = pca_fit(seen_sem, pd)
    bank = fit_prototype_predictor(seen_protos, seen_sem, SvrConfig(alpha=alpha, delta=delta), pca)
    predicted = predict_prototypes(bank, ds.semantics)
    clock(f"bank fitted; E range [{bank.errors.min():.3f}, {bank.errors.max():.3f}]")

    sel = select_features(bank, 16)
    noise_overlap = np.intersect1d(sel, truth.noise_dims).size
    clock(f"selection: {sorted(sel.tolist())}  noise dims in selection: {noise_overlap}/16")

    # 1NN evaluators
    unseen_pred_full = PrototypeTable(ds.unseen, predicted.rows_for(ds.unseen))
    r_nn_full = evaluate_zsl(unseen_pred_full, test_feats, test_labels, ds.unseen)
    unseen_pred_sel = PrototypeTable(ds.unseen, apply_selection(predicted.rows_for(ds.unseen), sel))
    r_nn_sel = evaluate_zsl(unseen_pred_sel, apply_selection(test_feats, sel), test_labels, ds.unseen)
    clock(f"1NN   nosel {r_nn_full.u_acc:6.2f}   sel {r_nn_sel.u_acc:6.2f}")

    results = {"nn_nosel": r_nn_full.u_acc, "nn_sel": r_nn_sel.u_acc,
               "noise_overlap": noise_overlap}

    def gan_cell(mode, use_sel, seed=1):
        feats = apply_selection(train_feats, sel) if use_sel else train_feats
        protos = None
        if mode == "residual":
            m = predicted.matrix
            m2 = apply_selection(m, sel) if use_sel else m
            protos = PrototypeTable(np.arange(m.shape[0]), m2)
        gcfg = GanConfig(hidden_units=hidden, gp_lambda=10.0, critic_steps=critic,
                         learning_rate=lr, batch_size=batch, iterations=iters,
                         mode=mode, seed=seed)
        model = train(feats, train_labels, ds.semantics, gcfg, protos)
        rng = np.random.default_rng(seed + 1)
        u_sem = ds.semantics[ds.unseen]
        u_protos = None
        if mode == "residual":
            u_protos = PrototypeTable(ds.unseen, protos.rows_for(ds.unseen))
        synth, synth_labels = synthesize_dataset(model, ds.unseen, u_sem, u_protos, per_class, rng)
        cls = softmax_fit(synth, synth_labels, SoftmaxConfig(), classes=ds.unseen)
        tf = apply_selection(test_feats, sel) if use_sel else test_feats
        rep = evaluate_zsl(cls, tf, test_labels, ds.unseen)
        extras = {}
        if mode == "residual":
            extras["purity"] = prototype_purity(synth, synth_labels, u_protos)
            residuals = synth - u_protos.rows_for(synth_labels)
            extras["ratio"] = residual_ratio(residuals, u_protos)[2]
        return rep.u_acc, extras

    for mode, use_sel, key in (("baseline", False, "base_nosel"),
                               ("residual", False, "res_nosel"),
                               ("residual", True, "res_sel")):
        acc, extras = gan_cell(mode, use_sel)
        results[key] = acc
        clock(f"softmax {mode:<9} {'sel' if use_sel else 'nosel':<6} U={acc:6.2f}  {extras}")
        if extras:
            results.update({f"{key}_{k}": v for k, v in extras.items()})

    print()
    print(f"gain A (res_nosel - base_nosel): {results['res_nosel'] - results['base_nosel']:.2f}")
    print(f"gain B softmax (res_sel - res_nosel): {results['res_sel'] - results['res_nosel']:.2f}")
    print(f"gain B 1nn (nn_sel - nn_nosel): {results['nn_sel'] - results['nn_nosel']:.2f}")
    return results


if __name__ == "__main__":
    kwargs = {}
    for arg in sys.argv[1:]:
        k, v = arg.split("=")
        kwargs[k] = float(v) if "." in v or "e" in v else int(v)
    run(**kwargs)
