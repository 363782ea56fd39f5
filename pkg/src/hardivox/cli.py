"""Command-line pipeline: phantom, features, convolve, train, classify,
evaluate, optimize, baseline, render, timing.

Every file-producing run writes a manifest JSON beside its primary output
(parameters, seeds, wall time, sha256 of each artifact). All randomness
flows from explicit --seed flags defaulting to 42; nothing reads the clock
for entropy. Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import time

import numpy as np

from .baseline import (
    DEFAULT_C_GRID,
    DEFAULT_GAMMA_GRID,
    predict_fusion_batch,
    stage1_datasets,
    train_fusion,
)
from .errors import HardivoxError, ValidationError
from .evaluation import (
    FitnessWeights,
    compute_metrics,
    cross_validate,
    estimate_classification_time,
    render_comparison,
    write_ppm,
)
from .features import (
    fit_sh,
    fit_tensor_eigenvalues,
    rotation_invariant_features,
    sh_to_odf,
)
from .filters import Dataset, convolve_features, flatten, load_bank, save_bank
from .phantom import PhantomSpec, generate_phantom
from .search import GaConfig, evolve, genome_to_bank, _stratified_subsample
from .svm import SvmConfig, model_from_json, model_to_json, predict_batch, train_svm
from .volumes import (
    CLASS_NAMES,
    FeatureVolume,
    LabelVolume,
    read_volume,
    write_volume,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits 2 by default; usage problems are validation errors
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(primary, subcommand, args, outputs, started):
    params = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "subcommand": subcommand,
        "parameters": params,
        "seed": params.get("seed"),
        "outputs": {p: _sha256(p) for p in outputs if os.path.exists(p)},
        "wall_time_seconds": time.time() - started,
    }
    path = primary + ".manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")
    return path


def _volume_pair(prefix):
    return [prefix + ".json", prefix + ".raw"]


def _parse_dims(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError(f"dims must be X,Y,Z, got {text!r}")
    return tuple(int(p) for p in parts)


def _load_dataset(features_prefix, labels_prefix):
    fv = read_volume(features_prefix)
    lv = read_volume(labels_prefix)
    if not isinstance(fv, FeatureVolume):
        raise ValidationError(f"{features_prefix} is not a feature volume")
    if not isinstance(lv, LabelVolume):
        raise ValidationError(f"{labels_prefix} is not a label volume")
    return fv, lv, flatten(fv, lv)


def _cmd_phantom(args):
    started = time.time()
    spec = PhantomSpec(
        dims=_parse_dims(args.dims),
        n_directions=args.directions,
        b_value=args.b_value,
        snr=args.snr,
        seed=args.seed,
        edge_sigma=args.edge_sigma,
    )
    dwi, labels = generate_phantom(spec)
    write_volume(args.out + "_dwi", dwi)
    write_volume(args.out + "_labels", labels)
    outputs = _volume_pair(args.out + "_dwi") + _volume_pair(args.out + "_labels")
    _write_manifest(args.out + "_dwi", "phantom", args, outputs, started)
    return 0


_SH_KINDS = {"sh4": 4, "sh8": 8}
_DERIVED_KINDS = {"sh4ri": 4, "sh8ri": 8, "odf4": 4, "odf8": 8}


def _cmd_features(args):
    started = time.time()
    vol = read_volume(args.in_prefix)
    kind = args.kind.lower()
    if kind in _SH_KINDS:
        fv = fit_sh(vol, _SH_KINDS[kind], args.reg)
    elif kind == "eig":
        fv = fit_tensor_eigenvalues(vol)
    elif kind in _DERIVED_KINDS:
        sh = fit_sh(vol, _DERIVED_KINDS[kind], args.reg)
        fv = rotation_invariant_features(sh) if kind.endswith("ri") else sh_to_odf(sh)
    else:
        raise ValidationError(f"unknown feature kind {args.kind!r}")
    write_volume(args.out, fv)
    _write_manifest(args.out, "features", args, _volume_pair(args.out), started)
    return 0


def _cmd_convolve(args):
    started = time.time()
    fv = read_volume(args.in_prefix)
    if not isinstance(fv, FeatureVolume):
        raise ValidationError(f"{args.in_prefix} is not a feature volume")
    bank = load_bank(args.bank)
    out = convolve_features(fv, bank)
    write_volume(args.out, out)
    _write_manifest(args.out, "convolve", args, _volume_pair(args.out), started)
    return 0


def _svm_config(args):
    gamma = None if args.gamma in (None, "auto") else float(args.gamma)
    return SvmConfig(C=args.c, gamma=gamma, tolerance=args.tolerance)


def _cmd_train(args):
    started = time.time()
    _, _, dataset = _load_dataset(args.features, args.labels)
    model = train_svm(dataset, _svm_config(args))
    with open(args.out, "w") as f:
        f.write(model_to_json(model))
        f.write("\n")
    _write_manifest(args.out, "train", args, [args.out], started)
    return 0


def _cmd_classify(args):
    started = time.time()
    fv = read_volume(args.features)
    if not isinstance(fv, FeatureVolume):
        raise ValidationError(f"{args.features} is not a feature volume")
    with open(args.model) as f:
        model = model_from_json(f.read())
    X, Y, Z = fv.dims
    rows = fv.values.transpose(2, 1, 0, 3).reshape(-1, fv.n)
    codes = predict_batch(model, rows)
    labels = codes.reshape(Z, Y, X).transpose(2, 1, 0)
    write_volume(args.out, LabelVolume(dims=fv.dims, labels=labels))
    _write_manifest(args.out, "classify", args, _volume_pair(args.out), started)
    return 0


def _print_report(report):
    print("confusion (rows = truth, cols = predicted):")
    header = "        " + "".join(f"{n:>8}" for n in CLASS_NAMES)
    print(header)
    for i, name in enumerate(CLASS_NAMES):
        row = "".join(f"{int(v):>8}" for v in report.confusion[i])
        print(f"{name:>8}{row}")
    print(f"MWMR                {report.mwmr:.6f}")
    print(f"EWMR                {report.ewmr:.6f}")
    print(f"IWMR                {report.iwmr:.6f}")
    print(f"fitness             {report.fitness:.6f}")
    print(f"global_error        {report.global_error:.6f}")
    print(f"merged_global_error {report.merged_global_error:.6f}")


def _cmd_evaluate(args):
    started = time.time()
    pred = read_volume(args.predicted)
    truth = read_volume(args.truth)
    if not isinstance(pred, LabelVolume) or not isinstance(truth, LabelVolume):
        raise ValidationError("evaluate needs two label volumes")
    weights = FitnessWeights(alpha=args.alpha, beta=args.beta, gamma_w=args.gamma_w)
    report = compute_metrics(truth.labels.ravel(), pred.labels.ravel(), weights)
    _print_report(report)
    if args.report:
        with open(args.report, "w") as f:
            f.write(report.to_json())
            f.write("\n")
        _write_manifest(args.report, "evaluate", args, [args.report], started)
    return 0


def _cmd_optimize(args):
    started = time.time()
    fv, _, dataset = _load_dataset(args.features, args.labels)
    budget = args.budget_hours * 3600.0 if args.budget_hours else None
    config = GaConfig(
        population=args.population,
        generations=args.generations,
        wall_clock_budget=budget,
        elites=args.elites,
        seed=args.seed,
        eval_subsample=args.subsample,
    )
    t0 = time.monotonic()
    elapsed = {}
    checkpoint_path = args.out + ".checkpoint.json"

    def checkpoint(gen, population, fitnesses):
        elapsed[gen] = time.monotonic() - t0
        state = {
            "generation": gen,
            "n": fv.n,
            "w": args.width,
            "seed": args.seed,
            "fitnesses": [None if not np.isfinite(f) else float(f) for f in fitnesses],
            "population": [g.genes.tolist() for g in population],
        }
        with open(checkpoint_path, "w") as f:
            json.dump(state, f)
            f.write("\n")

    best, history = evolve(
        dataset,
        fv.n,
        args.width,
        _svm_config(args),
        FitnessWeights(),
        config,
        on_generation=checkpoint,
    )
    bank = genome_to_bank(best, fv.n, args.width)
    save_bank(args.out, bank)
    history_path = os.path.join(os.path.dirname(os.path.abspath(args.out)), "history.csv")
    with open(history_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["generation", "best_fitness", "mean_fitness", "elapsed_seconds"])
        for gen, best_fit, mean_fit in history:
            writer.writerow([gen, repr(best_fit), repr(mean_fit), f"{elapsed[gen]:.3f}"])
    print(f"best fitness {best.cached_fitness}")
    _write_manifest(
        args.out, "optimize", args, [args.out, history_path, checkpoint_path], started
    )
    return 0


def _cmd_baseline(args):
    started = time.time()
    dwi = read_volume(args.dwi)
    labels = read_volume(args.labels)
    if not isinstance(labels, LabelVolume):
        raise ValidationError(f"{args.labels} is not a label volume")
    datasets = stage1_datasets(dwi, labels, lam=args.reg)
    kinds = tuple(datasets)
    any_ds = datasets[kinds[0]]
    if args.subsample and args.subsample < len(any_ds):
        idx = _stratified_subsample(any_ds, args.subsample, args.outer_folds, args.seed)
        datasets = {
            k: Dataset(
                features=d.features[idx],
                labels=d.labels[idx],
                provenance=d.provenance[idx],
            )
            for k, d in datasets.items()
        }
        any_ds = datasets[kinds[0]]

    C_grid = [float(v) for v in args.grid_c.split(",")] if args.grid_c else DEFAULT_C_GRID
    gamma_grid = (
        [float(v) for v in args.grid_gamma.split(",")] if args.grid_gamma else DEFAULT_GAMMA_GRID
    )

    from .evaluation import stratified_folds

    folds = stratified_folds(any_ds, args.outer_folds, args.seed)
    m = len(any_ds)
    predicted = np.full(m, 255, dtype=np.uint8)
    fold_configs = []
    for held in folds:
        mask = np.zeros(m, dtype=bool)
        mask[held] = True
        train_idx = np.flatnonzero(~mask)
        train_sets = {
            k: Dataset(
                features=d.features[train_idx],
                labels=d.labels[train_idx],
                provenance=d.provenance[train_idx],
            )
            for k, d in datasets.items()
        }
        fusion = train_fusion(
            train_sets,
            vote_mode=(args.mode == "vote"),
            C_grid=C_grid,
            gamma_grid=gamma_grid,
            grid_k=args.grid_folds,
            stacking_k=args.stacking_folds,
            seed=args.seed,
        )
        fold_configs.append(
            {
                kind: {"C": model.config.C, "gamma": model.config.gamma}
                for kind, model in fusion.stage1
            }
        )
        held_feats = {k: d.features[held] for k, d in datasets.items()}
        predicted[held] = predict_fusion_batch(fusion, held_feats)
    report = compute_metrics(any_ds.labels, predicted, FitnessWeights())
    _print_report(report)
    payload = {
        "mode": args.mode,
        "outer_folds": args.outer_folds,
        "subsample": args.subsample,
        "report": json.loads(report.to_json()),
        "per_fold_configs": fold_configs,
    }
    with open(args.report, "w") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")
    _write_manifest(args.report, "baseline", args, [args.report], started)
    return 0


def _cmd_render(args):
    started = time.time()
    pred = read_volume(args.predicted)
    truth = read_volume(args.truth)
    if not isinstance(pred, LabelVolume) or not isinstance(truth, LabelVolume):
        raise ValidationError("render needs two label volumes")
    outputs = []
    for z in range(truth.dims[2]):
        img = render_comparison(pred, truth, z)
        path = f"{args.out}_z{z}.ppm"
        write_ppm(path, img)
        outputs.append(path)
    _write_manifest(args.out + "_z0.ppm", "render", args, outputs, started)
    return 0


def _cmd_timing(args):
    print(estimate_classification_time(args.voxels, args.per_run))
    return 0


def build_parser():
    parser = _Parser(prog="hardivox", description=__doc__)
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker cap; results are identical for any value (runs sequential)",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic ground-truth volume")
    p.add_argument("--out", required=True)
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--dims", default="64,64,3")
    p.add_argument("--directions", type=int, default=64)
    p.add_argument("--b-value", type=float, default=1500.0)
    p.add_argument("--edge-sigma", type=float, default=0.8,
                   help="point-spread width for edge mixing; 0 = crisp")
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("features", help="extract per-voxel features from a DWI volume")
    p.add_argument("--in", dest="in_prefix", required=True)
    p.add_argument(
        "--kind",
        required=True,
        choices=["sh4", "sh8", "eig", "sh4ri", "sh8ri", "odf4", "odf8"],
    )
    p.add_argument("--lambda", dest="reg", type=float, default=0.006)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("convolve", help="apply a kernel bank to a feature volume")
    p.add_argument("--in", dest="in_prefix", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_convolve)

    def svm_flags(p):
        p.add_argument("--c", type=float, default=1.0)
        p.add_argument("--gamma", default="auto", help="'auto' means 1/n")
        p.add_argument("--tolerance", type=float, default=1e-3)

    p = sub.add_parser("train", help="train the one-vs-one SVM on features+labels")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    svm_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("classify", help="predict labels for a feature volume")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("evaluate", help="compare predicted labels against truth")
    p.add_argument("--predicted", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma-w", type=float, default=2.0)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("optimize", help="evolve convolution kernels by GA")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--width", type=int, required=True, choices=[5, 7, 9])
    p.add_argument("--population", type=int, default=500)
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--budget-hours", type=float, default=None)
    p.add_argument("--elites", type=int, default=20)
    p.add_argument("--subsample", type=int, default=None,
                   help="evaluate fitness on a stratified subset of this size")
    p.add_argument("--seed", type=int, default=42)
    svm_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("baseline", help="grid-searched per-feature SVM bank + fusion")
    p.add_argument("--dwi", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--mode", choices=["svm", "vote"], default="svm")
    p.add_argument("--report", required=True)
    p.add_argument("--lambda", dest="reg", type=float, default=0.006)
    p.add_argument("--subsample", type=int, default=None)
    p.add_argument("--outer-folds", type=int, default=6)
    p.add_argument("--grid-folds", type=int, default=10)
    p.add_argument("--stacking-folds", type=int, default=10)
    p.add_argument("--grid-c", default=None, help="comma-separated C grid override")
    p.add_argument("--grid-gamma", default=None, help="comma-separated gamma grid override")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("render", help="write predicted/truth/error PPM panels per slice")
    p.add_argument("--predicted", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("timing", help="print the estimated classification seconds")
    p.add_argument("--voxels", type=int, required=True)
    p.add_argument("--per-run", type=float, default=1.5)
    p.set_defaults(func=_cmd_timing)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise ValidationError(f"--threads must be >= 1, got {args.threads}")
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except HardivoxError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
