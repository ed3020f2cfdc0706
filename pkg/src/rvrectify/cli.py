"""Batch command-line pipeline over the library.

Subcommands: synth, corrupt, project, backproject, train, rectify, eval,
ddim-verify, gradhist, nu-sweep. Every run reads an optional sectioned
config plus flags, echoes the effective config next to its primary
output, and appends machine-readable JSON-line records. Exit codes:
0 success, 2 validation failure, 1 unexpected error, 64 usage.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .diffusion import (FixedConvPredictor, ScaledIdentityPredictor,
                        ZeroPredictor, make_schedule, verify_theorem1)
from .geometry import rrvp, rvp
from .io import (FormatError, append_record, export_png16, read_kitti_bin,
                 read_rvimg, save_labels, write_kitti_bin, write_rvimg)
from .losses import WelschParams
from .metrics import grad_jsd, jsd_sets, mmd, pooled_grad_norms
from .rectifier import (evaluate_rmse_by_label, load_regressor, rectify,
                        save_regressor, train_regressor)
from .synth import (CorruptionReport, corrupt_image, make_pair, smooth_image,
                    synth_scene)

NU_SWEEP_GRID = (0.01, 0.05, 0.1, 0.5, 1.0)

# Seed offsets separating the deterministic scene streams of a pipeline.
TRAIN_SEED_BASE = 1000
EVAL_SEED_BASE = 5000

_SMOOTH_KERNEL = 0.8 * np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _echo_config(cfg: RunConfig, primary: Path) -> None:
    cfg.echo(primary.parent / (primary.stem + ".config.txt"))


def _report_path(args, primary: Path) -> Path:
    if args.report:
        return Path(args.report)
    return primary.parent / (primary.stem + ".report.jsonl")


def _load_image_dir(directory: Path):
    paths = sorted(Path(directory).glob("*.rvimg"))
    if not paths:
        raise FormatError(f"no .rvimg files in {directory}")
    return [read_rvimg(p) for p in paths], paths


def _synth_pairs(cfg: RunConfig, proj, seeds, smooth_sigma: float):
    pairs, reports = [], []
    for seed in seeds:
        x_gt, x_gen, rep = make_pair(cfg.scene(seed), cfg.corruption(), proj)
        x_in = smooth_image(x_gen, smooth_sigma) if smooth_sigma > 0 else x_gen
        pairs.append((x_in, x_gt))
        reports.append(rep)
    return pairs, reports


# ---------------------------------------------------------- subcommands

def _cmd_synth(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.set("run", "seed", args.seed)
    out = Path(args.out)
    image = synth_scene(cfg.scene(cfg.seed), cfg.projection())
    write_rvimg(image, out)
    if args.png:
        export_png16(read_rvimg(out), args.png)
    _echo_config(cfg, out)
    append_record(_report_path(args, out), "synth_masked_fraction",
                  float(image.mask.mean()), {"seed": cfg.seed})
    return 0


def _cmd_corrupt(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.set("run", "seed", args.seed)
    image = read_rvimg(args.input)
    out = Path(args.out)
    corrupted, report = corrupt_image(image, cfg.corruption(cfg.seed))
    write_rvimg(corrupted, out)
    if args.png:
        export_png16(read_rvimg(out), args.png)
    labels_path = args.labels or out.parent / (out.stem + ".labels.npy")
    save_labels(report.labels, report.mask, labels_path)
    _echo_config(cfg, out)
    counts = report.counts()
    append_record(_report_path(args, out), "corrupt_label_counts",
                  counts, {"seed": cfg.seed,
                           "chunks_placed": report.chunks_placed})
    return 0


def _cmd_project(args) -> int:
    cfg = load_config(args.config)
    cloud = read_kitti_bin(args.input)
    out = Path(args.out)
    image, index_map = rvp(cloud, cfg.projection())
    write_rvimg(image, out)
    _echo_config(cfg, out)
    append_record(_report_path(args, out), "project_drops",
                  {"fov": index_map.dropped_fov,
                   "collision": index_map.dropped_collision},
                  {"points": len(cloud)})
    return 0


def _cmd_backproject(args) -> int:
    cfg = load_config(args.config)
    image = read_rvimg(args.input)
    out = Path(args.out)
    cloud, _ = rrvp(image)
    write_kitti_bin(cloud, out)
    _echo_config(cfg, out)
    append_record(_report_path(args, out), "backproject_points",
                  len(cloud), {})
    return 0


def _load_pairs_from_dirs(gen_dir, gt_dir):
    gen_images, gen_paths = _load_image_dir(gen_dir)
    gt_images, gt_paths = _load_image_dir(gt_dir)
    gen_names = [p.name for p in gen_paths]
    if gen_names != [p.name for p in gt_paths]:
        raise FormatError("generated and ground-truth file names differ")
    reports = None
    label_paths = [p.parent / (p.stem + ".labels.npy") for p in gen_paths]
    if all(p.exists() for p in label_paths):
        reports = []
        for lp in label_paths:
            grid = np.load(lp)
            mask = grid != 255
            reports.append(CorruptionReport(
                labels=np.where(mask, grid, 0).astype(np.uint8), mask=mask))
    return list(zip(gen_images, gt_images)), reports


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.set("run", "seed", args.seed)
    t = cfg.values["train"]
    if args.gen_dir and args.gt_dir:
        pairs, reports = _load_pairs_from_dirs(args.gen_dir, args.gt_dir)
    else:
        seeds = [cfg.seed + TRAIN_SEED_BASE + k
                 for k in range(t["train_pairs"])]
        pairs, reports = _synth_pairs(cfg, cfg.projection(), seeds,
                                      t["smooth_sigma"])
    model, report = train_regressor(
        pairs, t["model"], t["loss"], WelschParams(t["nu"]), cfg.train(),
        reports=reports)
    out = Path(args.out)
    save_regressor(model, out)
    _echo_config(cfg, out)
    report_path = _report_path(args, out)
    append_record(report_path, "train_final_loss", float(report.loss[-1]),
                  {"model": t["model"], "loss": t["loss"], "nu": t["nu"],
                   "epochs": t["epochs"], "seed": cfg.seed})
    if report.rmse_by_label:
        append_record(report_path, "train_rmse_by_label",
                      report.rmse_by_label, {"seed": cfg.seed})
    return 0


def _cmd_rectify(args) -> int:
    cfg = load_config(args.config)
    model = load_regressor(args.model)
    image = read_rvimg(args.input)
    out = Path(args.out)
    rectified, cloud = rectify(image, model)
    write_rvimg(rectified, out)
    if args.png:
        export_png16(read_rvimg(out), args.png)
    if args.cloud:
        write_kitti_bin(cloud, args.cloud)
    _echo_config(cfg, out)
    shift = np.abs(rectified.depth - image.depth)[image.mask]
    append_record(_report_path(args, out), "rectify_mean_abs_shift",
                  float(shift.mean()) if shift.size else 0.0, {})
    return 0


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    gen_images, _ = _load_image_dir(args.gen)
    gt_images, _ = _load_image_dir(args.gt)
    gen_clouds = [rrvp(img)[0] for img in gen_images]
    gt_clouds = [rrvp(img)[0] for img in gt_images]
    extent = cfg.get("metrics", "bev_extent")
    report_path = Path(args.report)
    _echo_config(cfg, report_path)
    params = {"extent": extent, "n_gen": len(gen_clouds),
              "n_gt": len(gt_clouds)}
    jsd_value = jsd_sets(gen_clouds, gt_clouds, extent)
    mmd_value = mmd(gen_clouds, gt_clouds, extent)
    append_record(report_path, "jsd", jsd_value, params)
    append_record(report_path, "mmd", mmd_value, params)
    print(f"jsd {jsd_value!r}")
    print(f"mmd {mmd_value!r}")
    return 0


def _cmd_gradhist(args) -> int:
    cfg = load_config(args.config)
    images, _ = _load_image_dir(args.images)
    report_path = Path(args.report)
    _echo_config(cfg, report_path)
    norms = pooled_grad_norms(images)
    append_record(report_path, "grad_mean",
                  float(norms.mean()) if norms.size else 0.0,
                  {"n_images": len(images), "in_range": int(norms.size)})
    if args.ref:
        ref_images, _ = _load_image_dir(args.ref)
        value = grad_jsd(images, ref_images)
        append_record(report_path, "grad_jsd", value,
                      {"n_images": len(images), "n_ref": len(ref_images)})
        print(f"grad_jsd {value!r}")
    return 0


def _cmd_ddim_verify(args) -> int:
    cfg = load_config(args.config)
    d = cfg.values["diffusion"]
    schedule = make_schedule(d["steps"], d["beta_start"], d["beta_end"])
    shape = (d["grid_height"], d["grid_width"])
    predictors = [
        ("zero", ZeroPredictor()),
        ("identity_0.5", ScaledIdentityPredictor(0.5)),
        ("identity_1.0", ScaledIdentityPredictor(1.0)),
        ("conv_3x3", FixedConvPredictor(_SMOOTH_KERNEL)),
    ]
    report_path = Path(args.report)
    _echo_config(cfg, report_path)
    failures = 0
    for name, predictor in predictors:
        result = verify_theorem1(predictor, schedule, d["trials"], shape,
                                 rng_seed=cfg.seed)
        failures += len(result.violations)
        append_record(report_path, "spatial_grad_bound",
                      {"bound": result.bound, "max_ratio": result.max_ratio,
                       "violations": len(result.violations)},
                      {"predictor": name, "trials": d["trials"],
                       "steps": d["steps"], "seed": cfg.seed})
        print(f"{name}: bound {result.bound:.6f} "
              f"max_ratio {result.max_ratio:.6f} "
              f"violations {len(result.violations)}")
    return 0 if failures == 0 else 1


def _cmd_nu_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.set("run", "seed", args.seed)
    t = cfg.values["train"]
    proj = cfg.projection()
    train_seeds = [cfg.seed + TRAIN_SEED_BASE + k
                   for k in range(t["train_pairs"])]
    eval_seeds = [cfg.seed + EVAL_SEED_BASE + k
                  for k in range(t["eval_pairs"])]
    train_pairs, _ = _synth_pairs(cfg, proj, train_seeds, t["smooth_sigma"])
    eval_pairs, eval_reports = _synth_pairs(cfg, proj, eval_seeds,
                                            t["smooth_sigma"])
    report_path = Path(args.report)
    _echo_config(cfg, report_path)
    for nu in NU_SWEEP_GRID:
        model, _ = train_regressor(train_pairs, t["model"], "welsch",
                                   WelschParams(nu), cfg.train())
        rmse = evaluate_rmse_by_label(eval_pairs, eval_reports, model)
        value = rmse.get("variance_artifact", float("nan"))
        append_record(report_path, "artifact_rmse", value,
                      {"nu": nu, "model": t["model"],
                       "train_pairs": len(train_pairs),
                       "eval_pairs": len(eval_pairs), "seed": cfg.seed})
        print(f"nu {nu}: artifact_rmse {value!r}")
    return 0


# -------------------------------------------------------------- parsing

def _build_parser() -> _Parser:
    parser = _Parser(prog="rvrectify", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="run config file")
        p.add_argument("--report", default=None,
                       help="JSON-lines report path")
        p.set_defaults(func=func)
        return p

    p = add("synth", _cmd_synth, "ray-cast a seeded synthetic scene")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--png", default=None, help="also export a 16-bit PNG")

    p = add("corrupt", _cmd_corrupt, "inject depth artifacts into an image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--labels", default=None, help="label grid output (.npy)")
    p.add_argument("--png", default=None, help="also export a 16-bit PNG")

    p = add("project", _cmd_project, "point cloud (.bin) to range image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = add("backproject", _cmd_backproject, "range image to point cloud")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = add("train", _cmd_train, "fit a rectification model")
    p.add_argument("--out", required=True, help="model output (.rrnm)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--gen-dir", default=None)
    p.add_argument("--gt-dir", default=None)

    p = add("rectify", _cmd_rectify, "apply a model to a range image")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cloud", default=None, help="also write the cloud (.bin)")
    p.add_argument("--png", default=None, help="also export a 16-bit PNG")

    p = add("eval", _cmd_eval, "distribution metrics between image sets")
    p.add_argument("--gen", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(report_required=True)

    p = add("gradhist", _cmd_gradhist, "gradient-distribution statistics")
    p.add_argument("--images", required=True)
    p.add_argument("--ref", default=None)
    p.set_defaults(report_required=True)

    p = add("ddim-verify", _cmd_ddim_verify,
            "check sampler spatial-gradient bounds")
    p.set_defaults(report_required=True)

    p = add("nu-sweep", _cmd_nu_sweep,
            "rerun training across the robust-width grid")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(report_required=True)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise _UsageError("a subcommand is required")
        if getattr(args, "report_required", False) and not args.report:
            raise _UsageError(f"{args.command} requires --report")
    except _UsageError as exc:
        print(parser.format_usage(), file=sys.stderr, end="")
        print(f"error: {exc}", file=sys.stderr)
        return 64
    try:
        return args.func(args)
    except (ConfigError, FormatError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
