"""Command-line driver for the testing pipeline.

Exit codes are a stable contract for CI:

    0  success
    2  usage, configuration, or artifact-loading error
    3  a configured failure-rate gate tripped
    4  unexpected runtime failure

Error output always includes the raising error's class name, so scripts
can match on stable strings like "BadMagic" or "ConfigError".
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, analysis, campaign, gradcam, imageio
from . import model as model_io
from . import nn, sensitivity
from .errors import InvalidClass, SrmtError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_GATE = 3
EXIT_RUNTIME = 4


def _load_model_and_image(args):
    model = model_io.load_model(args.model)
    image = imageio.load_png(args.image)
    return model, image


def _shape_text(shape) -> str:
    return "x".join(str(d) for d in shape)


def cmd_inspect_model(args) -> int:
    model = model_io.load_model(args.model)
    shapes = model_io.shape_chain(model.input_shape, model.layers)
    print(f"input: {_shape_text(model.input_shape)}  classes: {model.num_classes}")
    if model.class_names:
        print("class names: " + ", ".join(model.class_names))
    rows = []
    for i, (layer, out_shape) in enumerate(zip(model.layers, shapes[1:])):
        detail = ""
        if layer.kind == "conv2d":
            detail = (f"{layer.out_channels} filters {layer.kernel[0]}x{layer.kernel[1]} "
                      f"stride {layer.stride} pad {layer.padding}")
        elif layer.kind == "dense":
            detail = f"{layer.out_features} units"
        marker = "  <- heat-map target" if i == model.gradcam_target else ""
        activation = layer.activation if layer.activation != "none" else ""
        rows.append((str(i), layer.kind, detail, activation,
                     _shape_text(out_shape) + marker))
    widths = [max(len(r[c]) for r in rows) for c in range(4)]
    for r in rows:
        print("  ".join(r[c].ljust(widths[c]) for c in range(4)) + "  " + r[4])
    return EXIT_OK


def cmd_heatmap(args) -> int:
    model, image = _load_model_and_image(args)
    if image.shape != tuple(model.input_shape):
        raise SrmtError(
            f"image shape {image.shape} does not match model input "
            f"{tuple(model.input_shape)}")
    prediction = nn.forward(model, image)
    if args.all:
        classes = range(model.num_classes)
    else:
        if not 0 <= args.class_index < model.num_classes:
            raise InvalidClass(
                f"class {args.class_index} outside [0, {model.num_classes})")
        classes = [args.class_index]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for c in classes:
        grid = gradcam.class_heatmap(model, image, c, prediction=prediction)
        gradcam.save_gray_png(grid, out / f"class_{c}.png")
    print(f"wrote {len(list(classes))} heat map(s) to {out}")
    return EXIT_OK


def _fused_and_mask(model, image, method: str, threshold: float):
    prediction = nn.forward(model, image)
    stack = gradcam.all_class_heatmaps(model, image, prediction=prediction)
    top = gradcam.best_class(prediction)
    fused = sensitivity.fused_map(stack, method, best_class=top)
    return fused, fused >= threshold


def cmd_mask(args) -> int:
    model, image = _load_model_and_image(args)
    fused, mask = _fused_and_mask(model, image, args.method, args.threshold)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    from PIL import Image
    tmp = str(out) + ".tmp"
    Image.fromarray(mask).convert("1").save(tmp, format="PNG")
    os.replace(tmp, out)
    print(f"{int(mask.sum())} of {mask.size} pixels sensitive "
          f"(method {args.method}, threshold {args.threshold}); wrote {out}")
    return EXIT_OK


def cmd_candidates(args) -> int:
    model, image = _load_model_and_image(args)
    fused, mask = _fused_and_mask(model, image, args.method, args.threshold)
    rects = sensitivity.enumerate_rectangles(
        mask, args.rect_width, args.rect_height, args.stride)
    if args.max_candidates is not None:
        rects = rects[:args.max_candidates]
    lines = ["top,left,width,height,center_gradient"]
    for rect in rects:
        lines.append(f"{rect.top},{rect.left},{rect.width},{rect.height},"
                     f"{float(fused[rect.center])!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = str(out) + ".tmp"
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
        print(f"{len(rects)} candidate(s); wrote {out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    config = campaign.load_config(args.config)
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    result = campaign.run_campaign(config, jobs=jobs,
                                   log=lambda msg: print(msg, file=sys.stderr))
    paths = campaign.write_artifacts(result, config.out_dir)
    for method, entry in result.report["methods"].items():
        rate = "undefined" if entry["fdr"] is None else analysis.format_percent(entry["fdr"])
        print(f"{method}: {entry['trials']} trials, fdr {rate}")
    print(f"artifacts: {paths['trials']}, {paths['report']}")
    tripped = campaign.tripped_methods(result.report, config.fail_threshold)
    if tripped:
        print(f"failure-rate gate tripped (> {config.fail_threshold}): "
              + ", ".join(tripped), file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def cmd_report(args) -> int:
    records = campaign.read_trials_csv(args.trials)
    methods = tuple(m for m in campaign.METHODS if any(r.method == m for r in records))
    extra = [r.method for r in records if r.method not in methods]
    if extra:
        raise SrmtError(f"trials file holds unknown method {extra[0]!r}")
    kinds = []
    for r in records:
        if r.transform not in kinds:
            kinds.append(r.transform)
    config = campaign.CampaignConfig(
        model="(from trials)", seeds="(from trials)",
        methods=methods or campaign.METHODS,
        transforms=tuple(kinds) or campaign.CampaignConfig.transforms,
        num_bins=args.bins, min_bin_trials=args.min_trials)
    report = campaign.build_report(
        records, config, engine_version=__version__,
        seed_count=len({r.seed_id for r in records}))
    report["source"] = str(args.trials)
    if args.out:
        campaign.write_report_json(report, args.out)
        print(f"wrote {args.out}")
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        print()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srmt",
        description="Region-sensitivity metamorphic testing for image classifiers.")
    parser.add_argument("--version", action="version", version=f"srmt {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("inspect-model", help="print the architecture and shape chain")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect_model)

    p = sub.add_parser("heatmap", help="export per-class heat maps as PNG")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--class", dest="class_index", type=int)
    group.add_argument("--all", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("mask", help="export a sensitive-region mask as PNG")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--method", choices=sensitivity.RULES, default="max")
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("candidates", help="list candidate rectangles")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--method", choices=sensitivity.RULES, default="max")
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--rect-width", type=int, default=10)
    p.add_argument("--rect-height", type=int, default=10)
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--max-candidates", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_candidates)

    p = sub.add_parser("run", help="run a full campaign from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="rebuild a report from a trials file")
    p.add_argument("--trials", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--min-trials", type=int, default=30)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SrmtError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:                  # anything else is a runtime failure
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
