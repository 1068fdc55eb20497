"""deim command line: datagen, reduce, train, evaluate, add-class.

Stages communicate through artifact directories (see artifacts module).
Each stage records the fingerprints of its inputs, and later stages refuse
artifacts whose recorded provenance does not match what they are given.
Reports are written as CSV/JSON plus PNG renderings of the same numbers.

Exit codes: 0 success, 1 numerical or training failure, 2 configuration,
artifact, or IO error.
"""

import argparse
import csv
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import figures
from .artifacts import (
    _jsonable,
    load_artifact,
    load_bundle,
    rebuild_selection,
    save_artifact,
    save_bundle,
)
from .config import load_config
from .datagen import (
    ks_reference,
    ks_trajectory_ensemble,
    mnist_load,
    mnist_split,
    rd_reference,
    rd_training_set,
)
from .datagen.mnist import MnistSet
from .errors import (
    ArtifactError,
    BlowUpError,
    ConfigError,
    DataFormatError,
    DegenerateBasisError,
    DimensionError,
    IntegrityError,
    RankDeficiencyError,
    SolverError,
)
from .pipeline import (
    CaseKind,
    add_class,
    classify,
    evaluate_baselines,
    offline,
    predict_solution,
    rollout,
    tare,
)
from .reduction import (
    PodBasis,
    SnapshotMatrix,
    eim_error_curve,
    eim_select,
    pod_basis,
    trajectory_l2_errors,
)
from .resnet import LabeledSet, param_count

_CASES = {
    "classification": CaseKind.CLASSIFICATION,
    "param-to-solution": CaseKind.PARAM_TO_SOLUTION,
    "one-step": CaseKind.ONE_STEP,
}
_CURVE_REFERENCE_CAP = 1024


# ---------------------------------------------------------------------------
# shared helpers


def _effective_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        # one master seed drives every stage
        cfg = replace(
            cfg,
            seed=args.seed,
            ks=replace(cfg.ks, ic_seed=args.seed),
            train=replace(cfg.train, seed=args.seed),
        )
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers: must be at least 1")
        cfg = replace(cfg, workers=args.workers)
    return cfg


def _require(cond, message):
    if not cond:
        raise IntegrityError(message)


def _snapshot_columns(manifest, arrays):
    """State-vector columns plus curve references for any data artifact."""
    if manifest["kind"] == "snapshots":
        traj = arrays["trajectories"]
        rows = traj.reshape(-1, traj.shape[-1])
        return SnapshotMatrix(rows.T, arrays["coords"]), rows
    if "outputs" in arrays:
        return SnapshotMatrix(arrays["outputs"].T), arrays["outputs"]
    if "train_images" in arrays:
        return SnapshotMatrix(arrays["train_images"].T), arrays["train_images"]
    raise ArtifactError(
        f"artifact of kind {manifest['kind']!r} holds no snapshot data"
    )


def _method_row(method, n_nets, arch, **extra):
    per_net = param_count(arch.d, arch.width, arch.residual_blocks, arch.d_star)
    row = {
        "method": method,
        "n_resnets": n_nets,
        "layers": arch.residual_blocks + 2,
        "width": arch.width,
        "params": per_net,
        "total_params": n_nets * per_net,
    }
    row.update(extra)
    return row


def _write_rows_csv(path, rows):
    fieldnames = list(dict.fromkeys(key for row in rows for key in row))
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, restval="")
        writer.writeheader()
        writer.writerows(rows)


def _write_json(path, payload):
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2) + "\n")


def _mnist_pools(arrays):
    pools = {}
    for name in ("train", "val", "test"):
        pools[name] = MnistSet(
            arrays[f"{name}_images"], arrays[f"{name}_labels"].astype(int)
        )
    return pools


def _training_logs(out_dir, bundle):
    log_dir = Path(out_dir) / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for uid in sorted(bundle.reports):
        rep = bundle.reports[uid]
        summary.append({
            "unit": uid,
            "final_loss": rep.final_loss,
            "best_validation_error": rep.best_validation_error,
            "iterations_run": rep.iterations_run,
            "stopped_by": rep.stopped_by,
            "wall_time": rep.wall_time,
            "skipped_updates": rep.skipped_updates,
        })
        with open(log_dir / f"unit_{uid}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "loss", "validation_error",
                            "grad_norm"])
            writer.writerows(rep.history)
    if summary:
        _write_rows_csv(Path(out_dir) / "training_log.csv", summary)


# ---------------------------------------------------------------------------
# datagen


def cmd_datagen_ks(args, cfg):
    ks = cfg.ks
    if args.trajectories is not None:
        ks = replace(ks, n_trajectories=args.trajectories)
    if args.snapshots is not None:
        ks = replace(ks, snapshots_per_trajectory=args.snapshots)
    trajectories = ks_trajectory_ensemble(ks)
    steps = cfg.one_step.rollout_steps
    reference = ks_reference(ks, horizon=steps * ks.snapshot_interval)
    manifest = save_artifact(
        args.out, "snapshots",
        {
            "trajectories": trajectories,
            "coords": ks.grid,
            "reference": reference,
        },
        params={"solver": asdict(ks), "reference_steps": steps},
        seed=ks.ic_seed,
    )
    n_traj, n_snap, n_grid = trajectories.shape
    print(f"snapshots: {n_traj} trajectories x {n_snap} snapshots "
          f"x {n_grid} dof, reference rollout {steps} steps")
    print(f"fingerprint: {manifest['fingerprint']}")
    return 0


def cmd_datagen_rd(args, cfg):
    dataset = rd_training_set(cfg.rd)
    theta_ref, u_ref = rd_reference(cfg.rd)
    manifest = save_artifact(
        args.out, "dataset",
        {
            "inputs": dataset.inputs,
            "outputs": dataset.outputs,
            "reference_theta": theta_ref,
            "reference_solution": u_ref,
        },
        params={"solver": asdict(cfg.rd)},
        seed=cfg.seed,
    )
    print(f"dataset: {len(dataset.inputs)} parameter/solution pairs "
          f"at {dataset.outputs.shape[1]} dof, one held-out reference")
    print(f"fingerprint: {manifest['fingerprint']}")
    return 0


def cmd_datagen_mnist(args, cfg):
    data = mnist_load(args.images, args.labels)
    split = cfg.classification.split
    train, val, test = mnist_split(data, cfg.seed, split)
    arrays = {}
    for name, pool in (("train", train), ("val", val), ("test", test)):
        arrays[f"{name}_images"] = pool.images
        arrays[f"{name}_labels"] = pool.labels.astype(float)
    manifest = save_artifact(
        args.out, "dataset", arrays,
        params={
            "split": list(split),
            "source_images": str(args.images),
            "source_labels": str(args.labels),
        },
        seed=cfg.seed,
    )
    print(f"dataset: {len(train)}/{len(val)}/{len(test)} "
          "train/validation/test images")
    print(f"fingerprint: {manifest['fingerprint']}")
    return 0


# ---------------------------------------------------------------------------
# reduce


def cmd_reduce(args, cfg):
    if args.energy_tol is not None and not 0.0 < args.energy_tol < 1.0:
        raise ConfigError(
            f"energy-tol must lie strictly between 0 and 1, "
            f"got {args.energy_tol}"
        )
    if args.m is not None and args.m < 1:
        raise ConfigError(f"m must be positive, got {args.m}")

    manifest, arrays = load_artifact(args.snapshots)
    matrix, references = _snapshot_columns(manifest, arrays)

    capped_from = None
    if args.m is not None:
        try:
            basis = pod_basis(matrix, rank=args.m)
        except RankDeficiencyError as err:
            # mirror the offline stage: fall back to the achievable rank
            capped_from = args.m
            basis = pod_basis(matrix, rank=err.achievable)
    else:
        basis = pod_basis(matrix, energy_tol=args.energy_tol)
    selection = eim_select(basis)

    stride = max(1, -(-len(references) // _CURVE_REFERENCE_CAP))
    curve = eim_error_curve(matrix, references[::stride], basis.m)

    out = Path(args.out)
    upstream = {"source": manifest["fingerprint"]}
    basis_man = save_artifact(
        out / "basis", "basis",
        {"V": basis.V, "singular_values": basis.singular_values},
        params={
            "m": basis.m,
            "m_requested": capped_from or basis.m,
            "energy_tol": args.energy_tol,
            "upstream": upstream,
        },
        seed=manifest.get("seed"),
    )
    sel_man = save_artifact(
        out / "selection", "selection",
        {
            "indices": np.asarray(selection.indices, dtype=float),
            "ptv": selection.ptv,
        },
        params={
            "condition": selection.condition,
            "upstream": dict(upstream, basis=basis_man["fingerprint"]),
        },
        seed=manifest.get("seed"),
    )
    with open(out / "error_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "error"])
        writer.writerows(curve)
    figures.render_error_curve(out / "error_curve.png", curve)

    if capped_from:
        print(f"warning: snapshot set supports rank {basis.m}, "
              f"capping m from {capped_from}")
    print(f"basis: {basis.m} modes over {matrix.n} dof "
          f"(condition {selection.condition:.3e}, "
          f"{len(references[::stride])} curve references)")
    print(f"basis fingerprint: {basis_man['fingerprint']}")
    print(f"selection fingerprint: {sel_man['fingerprint']}")
    return 0


# ---------------------------------------------------------------------------
# train


def _load_reduction(reduction_dir, dataset_manifest, state_dim):
    basis_man, basis_arr = load_artifact(
        Path(reduction_dir) / "basis", kind="basis"
    )
    sel_man, sel_arr = load_artifact(
        Path(reduction_dir) / "selection", kind="selection"
    )
    _require(
        basis_man["params"]["upstream"]["source"]
        == dataset_manifest["fingerprint"],
        "basis was derived from a different data artifact "
        "(upstream fingerprint mismatch)",
    )
    _require(
        sel_man["params"]["upstream"]["basis"] == basis_man["fingerprint"],
        "selection does not belong to this basis "
        "(upstream fingerprint mismatch)",
    )
    basis = PodBasis(basis_arr["V"], basis_arr["singular_values"])
    selection = rebuild_selection(
        sel_arr["indices"], sel_arr["ptv"], sel_man["params"]["condition"]
    )
    _require(
        basis.n == state_dim,
        f"basis has {basis.n} dof but the dataset has {state_dim}",
    )
    _require(
        selection.m == basis.m and selection.indices.max() < state_dim,
        f"selection size {selection.m} does not match basis size {basis.m}",
    )
    return basis, selection, basis_man, sel_man


def cmd_train(args, cfg):
    case = _CASES[args.case]
    dman, darr = load_artifact(args.dataset)

    if case is CaseKind.CLASSIFICATION:
        pools = _mnist_pools(darr)
        data = (pools["train"], pools["val"])
        state_dim = pools["train"].images.shape[1]
        opts = cfg.classification
        extra = {
            "digits": opts.digits,
            "per_class_train": opts.per_class_train,
            "per_class_val": opts.per_class_val,
        }
    elif case is CaseKind.PARAM_TO_SOLUTION:
        data = LabeledSet(darr["inputs"], darr["outputs"])
        state_dim = darr["outputs"].shape[1]
        opts = cfg.param_map
        extra = {}
    else:
        data = (darr["trajectories"], darr["coords"])
        state_dim = darr["trajectories"].shape[-1]
        opts = cfg.one_step
        extra = {
            "stencil_size": opts.stencil_size,
            "topology": opts.topology,
        }

    basis, selection, basis_man, sel_man = _load_reduction(
        args.reduction, dman, state_dim
    )

    bundle = offline(
        case, data, m=selection.m, width=opts.width,
        residual_blocks=opts.residual_blocks, train_cfg=cfg.train,
        workers=cfg.workers, reduction=(basis, selection), **extra,
    )
    manifest = save_bundle(
        args.out, bundle, seed=cfg.train.seed,
        upstream={
            "dataset": dman["fingerprint"],
            "basis": basis_man["fingerprint"],
            "selection": sel_man["fingerprint"],
        },
    )
    _training_logs(args.out, bundle)

    arch = bundle.architecture
    per_net = param_count(arch.d, arch.width, arch.residual_blocks,
                          arch.d_star)
    print(f"bundle: {len(bundle.networks)} networks "
          f"({per_net} params each), m = {bundle.m}")
    print(f"fingerprint: {manifest['fingerprint']}")
    if bundle.failures:
        for uid, message in sorted(bundle.failures.items()):
            print(f"unit {uid} failed: {message}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# evaluate


def _check_evaluate_inputs(bundle, bundle_man, dman, darr):
    case = bundle.case
    needed = {
        CaseKind.CLASSIFICATION: ("test_images", "test_labels"),
        CaseKind.PARAM_TO_SOLUTION: ("reference_theta", "reference_solution"),
        CaseKind.ONE_STEP: ("reference", "coords"),
    }[case]
    missing = [name for name in needed if name not in darr]
    if missing:
        raise ConfigError(
            f"case mismatch: a {case.value} bundle needs a data artifact "
            f"with {', '.join(needed)}; missing {', '.join(missing)}"
        )
    recorded = bundle_man["params"]["upstream"].get("dataset")
    _require(
        recorded == dman["fingerprint"],
        "data artifact is not the one this bundle was trained from "
        "(upstream fingerprint mismatch)",
    )


def _evaluate_classification(bundle, darr, cfg, baselines):
    pools = _mnist_pools(darr)
    test = pools["test"]
    # score over the classes the bundle was trained on
    keep = np.isin(test.labels, sorted(bundle.networks))
    images, labels = test.images[keep], test.labels[keep]
    preds = classify(bundle, images[:, bundle.selection.indices])
    accuracy = float(np.mean(preds == labels))
    rows = [_method_row(
        "DNN-EIM", len(bundle.networks), bundle.architecture,
        accuracy=accuracy,
        wall_time=float(sum(r.wall_time for r in bundle.reports.values())),
    )]
    if baselines:
        opts = cfg.classification
        brows, _ = evaluate_baselines(
            CaseKind.CLASSIFICATION, (pools["train"], pools["val"]),
            test_data=test, m=bundle.m, train_cfg=cfg.train,
            workers=cfg.workers, unit_width=opts.width,
            unit_blocks=opts.residual_blocks, single_width=opts.single_width,
            single_blocks=opts.single_residual_blocks, digits=opts.digits,
            per_class_train=opts.per_class_train,
            per_class_val=opts.per_class_val,
        )
        rows += [row for row in brows if row["method"] != "DNN-EIM"]
    arrays = {
        "predictions": preds.astype(float),
        "labels": labels.astype(float),
    }
    payload = {
        "case": bundle.case,
        "metric": "accuracy",
        "rows": rows,
        "n_test": int(len(labels)),
    }
    return rows, arrays, payload, "accuracy"


def _evaluate_param_map(bundle, darr, cfg, baselines):
    theta_ref = darr["reference_theta"]
    u_ref = darr["reference_solution"]
    pred = predict_solution(bundle, theta_ref)
    rel = float(np.linalg.norm(pred.field - u_ref) / np.linalg.norm(u_ref))
    rows = [_method_row(
        "DNN-EIM", len(bundle.networks), bundle.architecture,
        l2_error=rel,
        wall_time=float(sum(r.wall_time for r in bundle.reports.values())),
    )]
    if baselines:
        opts = cfg.param_map
        brows, _ = evaluate_baselines(
            CaseKind.PARAM_TO_SOLUTION,
            LabeledSet(darr["inputs"], darr["outputs"]),
            reference=(theta_ref, u_ref), m=bundle.m, train_cfg=cfg.train,
            workers=cfg.workers, unit_width=opts.width,
            unit_blocks=opts.residual_blocks, single_width=opts.single_width,
            single_blocks=opts.single_residual_blocks,
        )
        rows += [row for row in brows if row["method"] != "DNN-EIM"]
    arrays = {
        "predicted_field": pred.field,
        "reference_solution": u_ref,
        "reference_theta": theta_ref,
    }
    payload = {
        "case": bundle.case,
        "metric": "l2_error",
        "rows": rows,
        "extrapolated": pred.extrapolated,
    }
    return rows, arrays, payload, "l2_error"


def _evaluate_one_step(bundle, dman, darr, cfg, baselines):
    reference = darr["reference"]
    solver = dman["params"]["solver"]
    dt = float(solver["snapshot_interval"])
    dx = float(solver["domain_length"]) / int(solver["n_grid"])
    steps = len(reference) - 1
    result = rollout(bundle, reference[0], steps)
    err = tare(result.fields, reference, dt=dt, dx=dx)
    step_errors = trajectory_l2_errors(result.fields - reference, dx)
    rows = [_method_row(
        "DNN-EIM", len(bundle.networks), bundle.architecture,
        tare=err.value,
        wall_time=float(sum(r.wall_time for r in bundle.reports.values())),
    )]
    if baselines:
        opts = cfg.one_step
        brows, _ = evaluate_baselines(
            CaseKind.ONE_STEP, (darr["trajectories"], darr["coords"]),
            reference_trajectory=reference, m=bundle.m, dt=dt, dx=dx,
            train_cfg=cfg.train, workers=cfg.workers, unit_width=opts.width,
            unit_blocks=opts.residual_blocks, single_width=opts.single_width,
            single_blocks=opts.single_residual_blocks,
            stencil_size=opts.stencil_size, topology=opts.topology,
        )
        rows += [row for row in brows if row["method"] != "DNN-EIM"]
    arrays = {
        "fields": result.fields,
        "reference": reference,
        "step_errors": step_errors,
        "times": np.arange(steps + 1) * dt,
    }
    payload = {
        "case": bundle.case,
        "metric": "tare",
        "rows": rows,
        "tare": err.value,
        "instantaneous": err.instantaneous,
        "step_errors": step_errors,
        "dt": dt,
        "dx": dx,
    }
    return rows, arrays, payload, "tare"


def cmd_evaluate(args, cfg):
    bundle = load_bundle(args.bundle)
    bundle_man, _ = load_artifact(args.bundle, kind="bundle")
    dman, darr = load_artifact(args.data)
    _check_evaluate_inputs(bundle, bundle_man, dman, darr)

    if bundle.case is CaseKind.CLASSIFICATION:
        rows, arrays, payload, metric = _evaluate_classification(
            bundle, darr, cfg, args.baselines
        )
    elif bundle.case is CaseKind.PARAM_TO_SOLUTION:
        rows, arrays, payload, metric = _evaluate_param_map(
            bundle, darr, cfg, args.baselines
        )
    else:
        rows, arrays, payload, metric = _evaluate_one_step(
            bundle, dman, darr, cfg, args.baselines
        )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows_csv(out / "report.csv", rows)
    _write_json(out / "report.json", payload)
    # rows carry wall times, which vary run to run, so they live in the
    # non-fingerprinted section of the manifest
    save_artifact(
        out / "report", "report", arrays,
        params={
            "metric": metric,
            "upstream": {
                "bundle": bundle_man["fingerprint"],
                "dataset": dman["fingerprint"],
            },
        },
        seed=bundle_man.get("seed"),
        reports=payload,
    )

    fig_dir = out / "figures"
    fig_dir.mkdir(exist_ok=True)
    if bundle.case is CaseKind.ONE_STEP:
        figures.render_rollout(
            fig_dir / "rollout.png", darr["coords"], arrays["fields"],
            arrays["reference"], payload["dt"],
        )
        figures.render_step_errors(
            fig_dir / "step_errors.png", arrays["times"],
            arrays["step_errors"],
        )
    elif bundle.case is CaseKind.PARAM_TO_SOLUTION:
        coords = np.linspace(0.0, 1.0, len(arrays["reference_solution"]))
        figures.render_field_comparison(
            fig_dir / "solution.png", coords, arrays["predicted_field"],
            arrays["reference_solution"],
        )
    figures.render_method_bars(
        fig_dir / f"{metric}.png", rows, metric,
        log_scale=metric != "accuracy",
    )

    for row in rows:
        print(f"{row['method']}: {metric} = {row[metric]:.6g}")
    return 0


# ---------------------------------------------------------------------------
# add-class


def cmd_add_class(args, cfg):
    bundle = load_bundle(args.bundle)
    bundle_man, _ = load_artifact(args.bundle, kind="bundle")
    if bundle.case is not CaseKind.CLASSIFICATION:
        raise ConfigError(
            f"add-class needs a classification bundle, "
            f"got {bundle.case.value}"
        )
    dman, darr = load_artifact(args.dataset)
    recorded = bundle_man["params"]["upstream"].get("dataset")
    _require(
        recorded == dman["fingerprint"],
        "dataset does not match the bundle's recorded training data, so its "
        "interpolation selection would differ (fingerprint mismatch)",
    )
    pools = _mnist_pools(darr)
    opts = cfg.classification
    extended = add_class(
        bundle, args.digit, pools["train"], pools["val"],
        train_cfg=cfg.train, workers=cfg.workers,
        per_class_train=opts.per_class_train,
        per_class_val=opts.per_class_val,
    )
    manifest = save_bundle(
        args.out, extended, seed=cfg.train.seed,
        upstream=bundle_man["params"]["upstream"],
    )
    _training_logs(args.out, extended)
    print(f"bundle: {len(extended.networks)} networks "
          f"(added digit {args.digit})")
    print(f"fingerprint: {manifest['fingerprint']}")
    if args.digit in extended.failures:
        print(f"unit {args.digit} failed: {extended.failures[args.digit]}",
              file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, metavar="PATH",
                        help="YAML run configuration")
    common.add_argument("--out", type=Path, required=True, metavar="DIR",
                        help="output directory")
    common.add_argument("--seed", type=int, default=None, metavar="N",
                        help="master seed override")
    common.add_argument("--workers", type=int, default=None, metavar="N",
                        help="parallel training processes")

    parser = argparse.ArgumentParser(
        prog="deim",
        description="Interpolation-based surrogate pipeline: generate data, "
                    "reduce, train per-point networks, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")

    datagen = sub.add_parser("datagen", help="generate training data")
    sources = datagen.add_subparsers(dest="source", required=True,
                                     metavar="SOURCE")
    p = sources.add_parser("ks", parents=[common],
                           help="chaotic PDE trajectory ensemble")
    p.add_argument("--trajectories", type=int, default=None, metavar="N",
                   help="override the configured ensemble size")
    p.add_argument("--snapshots", type=int, default=None, metavar="N",
                   help="override snapshots per trajectory")
    p.set_defaults(func=cmd_datagen_ks)
    p = sources.add_parser("rd", parents=[common],
                           help="steady reaction-diffusion parameter sweep")
    p.set_defaults(func=cmd_datagen_rd)
    p = sources.add_parser("mnist", parents=[common],
                           help="split IDX image/label files into pools")
    p.add_argument("--images", type=Path, required=True, metavar="PATH")
    p.add_argument("--labels", type=Path, required=True, metavar="PATH")
    p.set_defaults(func=cmd_datagen_mnist)

    p = sub.add_parser("reduce", parents=[common],
                       help="basis, interpolation points, and error curve")
    p.add_argument("--snapshots", type=Path, required=True, metavar="DIR",
                   help="snapshots or dataset artifact")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--m", type=int, default=None,
                       help="number of interpolation points")
    group.add_argument("--energy-tol", type=float, default=None,
                       dest="energy_tol",
                       help="cumulative energy fraction in (0, 1)")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("train", parents=[common],
                       help="train one network per interpolation point")
    p.add_argument("--case", required=True, choices=sorted(_CASES))
    p.add_argument("--dataset", type=Path, required=True, metavar="DIR")
    p.add_argument("--reduction", type=Path, required=True, metavar="DIR",
                   help="directory written by `deim reduce`")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score a trained bundle and write reports")
    p.add_argument("--bundle", type=Path, required=True, metavar="DIR")
    p.add_argument("--data", type=Path, required=True, metavar="DIR")
    p.add_argument("--baselines", action="store_true",
                   help="also train and score the comparison methods")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("add-class", parents=[common],
                       help="extend a classification bundle with one digit")
    p.add_argument("--bundle", type=Path, required=True, metavar="DIR")
    p.add_argument("--dataset", type=Path, required=True, metavar="DIR")
    p.add_argument("--digit", type=int, required=True)
    p.set_defaults(func=cmd_add_class)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _effective_config(args)
        return args.func(args, cfg)
    except (ConfigError, ArtifactError, DataFormatError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (SolverError, BlowUpError, RankDeficiencyError,
            DegenerateBasisError, DimensionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
