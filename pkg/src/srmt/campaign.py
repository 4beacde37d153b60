"""Campaign orchestration: follow-up generation, judging, and reporting.

A campaign walks every accepted seed through the pipeline: heat maps for
all classes, one fused score map per configured method, candidate
rectangles (or random baseline rectangles), one follow-up image per
(candidate, transform kind), and a verdict per follow-up. A trial is
negative when the predicted class changed.

Determinism contract: the trial stream depends only on (model, seeds,
config, master seed). Every random draw comes from a substream addressed
by (seed id, method, transform, purpose, index), seeds are emitted in
manifest order, and per-seed work is pure, so worker count and
scheduling cannot change a single byte of the output.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import analysis, gradcam, model as model_io, nn, rng as rng_mod
from . import seeds as seeds_mod
from . import sensitivity, transforms
from .errors import ConfigError, FewerThanTwoBins, UndefinedForZeroTrials
from .sensitivity import Rect

METHODS = ("baseline_random", "max", "avg", "best")
JUDGE_BATCH = 128

TRIALS_COLUMNS = ("seed_id", "method", "transform", "top", "left", "width", "height",
                  "center_gradient", "pred_before", "pred_after", "verdict")


@dataclass(frozen=True)
class CampaignConfig:
    model: str = ""
    seeds: str = ""
    methods: tuple[str, ...] = METHODS
    transforms: tuple[str, ...] = transforms.TRANSFORM_NAMES
    rect_width: int = 10
    rect_height: int = 10
    threshold: float = 0.9
    stride: int = 5
    baseline_samples: int = 500
    master_seed: int = 0
    max_candidates: int | None = None
    out_dir: str = "campaign_out"
    transform_params: dict = field(default_factory=dict)
    gradient_rule: str | None = None          # None: each method's own fusion
    baseline_gradient_rule: str = "max"       # fusion read for baseline trials
    fail_threshold: float | None = None
    num_bins: int = 20
    min_bin_trials: int = 30


def config_from_dict(data: dict, *, base_dir: Path | None = None) -> CampaignConfig:
    """Validated config; unknown keys and bad values raise ConfigError."""
    known = {f.name for f in fields(CampaignConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(data)
    cfg = CampaignConfig(
        model=str(merged.get("model", "")),
        seeds=str(merged.get("seeds", "")),
        methods=_subset(merged.get("methods", METHODS), METHODS, "methods"),
        transforms=_subset(merged.get("transforms", transforms.TRANSFORM_NAMES),
                           transforms.TRANSFORM_NAMES, "transforms"),
        rect_width=_positive_int(merged.get("rect_width", 10), "rect_width"),
        rect_height=_positive_int(merged.get("rect_height", 10), "rect_height"),
        threshold=_unit_float(merged.get("threshold", 0.9), "threshold"),
        stride=_positive_int(merged.get("stride", 5), "stride"),
        baseline_samples=_non_negative_int(merged.get("baseline_samples", 500),
                                           "baseline_samples"),
        master_seed=_non_negative_int(merged.get("master_seed", 0), "master_seed"),
        max_candidates=(None if merged.get("max_candidates") is None
                        else _positive_int(merged["max_candidates"], "max_candidates")),
        out_dir=str(merged.get("out_dir", "campaign_out")),
        transform_params=_transform_params(merged.get("transform_params", {})),
        gradient_rule=_optional_rule(merged.get("gradient_rule"), "gradient_rule"),
        baseline_gradient_rule=_required_rule(merged.get("baseline_gradient_rule", "max"),
                                              "baseline_gradient_rule"),
        fail_threshold=(None if merged.get("fail_threshold") is None
                        else float(merged["fail_threshold"])),
        num_bins=_positive_int(merged.get("num_bins", 20), "num_bins"),
        min_bin_trials=_non_negative_int(merged.get("min_bin_trials", 30), "min_bin_trials"),
    )
    if not cfg.model:
        raise ConfigError("config needs a model path")
    if not cfg.seeds:
        raise ConfigError("config needs a seed manifest path")
    if cfg.num_bins < 2:
        raise ConfigError(f"num_bins must be at least 2, got {cfg.num_bins}")
    if base_dir is not None:
        cfg = replace(cfg,
                      model=str(_resolve(base_dir, cfg.model)),
                      seeds=str(_resolve(base_dir, cfg.seeds)),
                      out_dir=str(_resolve(base_dir, cfg.out_dir)))
    return cfg


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _subset(values, allowed, label) -> tuple[str, ...]:
    values = list(values)
    if not values:
        raise ConfigError(f"{label} must not be empty")
    out = []
    for v in values:
        if v not in allowed:
            raise ConfigError(f"{label}: unknown entry {v!r} (allowed: {list(allowed)})")
        if v not in out:
            out.append(v)
    return tuple(out)


def _positive_int(value, label) -> int:
    try:
        ivalue = int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{label} must be an integer, got {value!r}") from exc
    if ivalue < 1:
        raise ConfigError(f"{label} must be positive, got {value!r}")
    return ivalue


def _non_negative_int(value, label) -> int:
    try:
        ivalue = int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{label} must be an integer, got {value!r}") from exc
    if ivalue < 0:
        raise ConfigError(f"{label} must be non-negative, got {value!r}")
    return ivalue


def _unit_float(value, label) -> float:
    try:
        fvalue = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{label} must be a number, got {value!r}") from exc
    if not 0.0 <= fvalue <= 1.0:
        raise ConfigError(f"{label} must lie in [0, 1], got {value!r}")
    return fvalue


def _required_rule(value, label) -> str:
    if value not in sensitivity.RULES:
        raise ConfigError(f"{label}: unknown fusion rule {value!r}")
    return value


def _optional_rule(value, label) -> str | None:
    if value is None:
        return None
    return _required_rule(value, label)


def _transform_params(data) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"transform_params must be an object, got {type(data).__name__}")
    for kind, params in data.items():
        if kind not in transforms.TRANSFORM_NAMES:
            raise ConfigError(f"transform_params: unknown transform {kind!r}")
        if not isinstance(params, dict):
            raise ConfigError(f"transform_params.{kind} must be an object")
        unknown = set(params) - set(transforms.DEFAULT_PARAMS[kind])
        if unknown:
            raise ConfigError(f"transform_params.{kind}: unknown keys {sorted(unknown)}")
    return {k: dict(v) for k, v in data.items()}


def load_config(path) -> CampaignConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return config_from_dict(data, base_dir=path.parent)


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialRecord:
    seed_id: str
    method: str
    transform: str
    rect: Rect
    center_gradient: float
    pred_before: int
    pred_after: int

    @property
    def negative(self) -> bool:
        return self.pred_after != self.pred_before

    @property
    def verdict(self) -> str:
        return "negative" if self.negative else "positive"


def judge(model, seed: seeds_mod.SeedImage, follow_up: np.ndarray) -> str:
    """"positive" when the follow-up keeps the seed's (correct) class."""
    logits = nn.forward_batch(model, follow_up[None])
    return "positive" if int(np.argmax(logits[0])) == seed.true_class else "negative"


def _method_rects(config: CampaignConfig, seed: seeds_mod.SeedImage, method: str,
                  kind: str, mask_rects: list[Rect] | None, image_hw) -> list[Rect]:
    if method == "baseline_random":
        stream = rng_mod.substream(config.master_seed, seed.id, method, kind, "rects")
        return transforms.random_rectangles(image_hw, config.rect_width,
                                            config.rect_height,
                                            config.baseline_samples, stream)
    rects = mask_rects if mask_rects is not None else []
    if config.max_candidates is not None:
        rects = rects[:config.max_candidates]
    return rects


def seed_trials(model, config: CampaignConfig, seed: seeds_mod.SeedImage) -> list[TrialRecord]:
    """All trials for one seed, in canonical (method, transform, index) order."""
    image = seed.pixels
    image_hw = (image.shape[1], image.shape[2])
    prediction = nn.forward(model, image)
    stack = gradcam.all_class_heatmaps(model, image, prediction=prediction)
    top_class = gradcam.best_class(prediction)

    fused: dict[str, np.ndarray] = {}

    def fused_for(rule: str) -> np.ndarray:
        if rule not in fused:
            fused[rule] = sensitivity.fused_map(stack, rule, best_class=top_class)
        return fused[rule]

    records: list[TrialRecord] = []
    for method in config.methods:
        if method == "baseline_random":
            gradient_map = fused_for(config.baseline_gradient_rule)
            mask_rects = None
        else:
            rule = config.gradient_rule or method
            gradient_map = fused_for(rule)
            mask = fused_for(method) >= config.threshold
            mask_rects = sensitivity.enumerate_rectangles(
                mask, config.rect_width, config.rect_height, config.stride)
        for kind in config.transforms:
            rects = _method_rects(config, seed, method, kind, mask_rects, image_hw)
            for start in range(0, len(rects), JUDGE_BATCH):
                chunk = rects[start:start + JUDGE_BATCH]
                batch = np.empty((len(chunk),) + image.shape, dtype=nn.DTYPE)
                for offset, rect in enumerate(chunk):
                    stream = None
                    if kind == "gaussian_noise":
                        stream = rng_mod.substream(config.master_seed, seed.id, method,
                                                   kind, "noise", start + offset)
                    batch[offset] = transforms.apply_transform(
                        image, rect, kind,
                        params=config.transform_params.get(kind), rng=stream)
                predicted = np.argmax(nn.forward_batch(model, batch), axis=1)
                for rect, pred_after in zip(chunk, predicted):
                    records.append(TrialRecord(
                        seed_id=seed.id,
                        method=method,
                        transform=kind,
                        rect=rect,
                        center_gradient=float(gradient_map[rect.center]),
                        pred_before=seed.true_class,
                        pred_after=int(pred_after),
                    ))
    return records


_WORKER_STATE: dict = {}


def _worker_init(model_path: str, config: CampaignConfig) -> None:
    _WORKER_STATE["model"] = model_io.load_model(model_path)
    _WORKER_STATE["config"] = config


def _worker_run(seed: seeds_mod.SeedImage) -> list[TrialRecord]:
    return seed_trials(_WORKER_STATE["model"], _WORKER_STATE["config"], seed)


# ---------------------------------------------------------------------------
# aggregation and the report
# ---------------------------------------------------------------------------

def _cell(records) -> dict:
    negatives = sum(1 for r in records if r.negative)
    positives = len(records) - negatives
    cell = {"trials": len(records), "positives": positives, "negatives": negatives}
    try:
        cell["fdr"] = analysis.fdr(positives, negatives)
    except UndefinedForZeroTrials:
        cell["fdr"] = None
    return cell


def _correlation_section(records, config: CampaignConfig) -> dict:
    values = [r.center_gradient for r in records]
    outcomes = [r.negative for r in records]
    bins = analysis.binned_rates(values, outcomes, config.num_bins)
    section = {
        "bins": [
            {"lo": b.lo, "hi": b.hi, "trials": b.trials,
             "negatives": b.negatives, "fdr": b.rate}
            for b in bins
        ],
        "qualifying_bins": sum(1 for b in bins if b.trials >= config.min_bin_trials),
        "min_bin_trials": config.min_bin_trials,
    }
    try:
        result = analysis.correlation(values, outcomes, num_bins=config.num_bins,
                                      min_trials=config.min_bin_trials)
        section["pearson_r"] = result.r
    except FewerThanTwoBins as exc:
        section["pearson_r"] = None
        section["undefined_reason"] = str(exc)
    return section


def build_report(records: list[TrialRecord], config: CampaignConfig, *,
                 engine_version: str, seed_count: int,
                 exclusions=(), timings: dict | None = None) -> dict:
    by_method: dict[str, list[TrialRecord]] = {m: [] for m in config.methods}
    for r in records:
        by_method.setdefault(r.method, []).append(r)

    methods_section: dict[str, dict] = {}
    baseline_fdr = None
    for method, method_records in by_method.items():
        entry = _cell(method_records)
        entry["per_transform"] = {
            kind: _cell([r for r in method_records if r.transform == kind])
            for kind in config.transforms
        }
        methods_section[method] = entry
        if method == "baseline_random":
            baseline_fdr = entry["fdr"]
    for method, entry in methods_section.items():
        if method == "baseline_random" or baseline_fdr in (None, 0.0):
            entry["fdr_ratio"] = None
        elif entry["fdr"] is None:
            entry["fdr_ratio"] = None
        else:
            entry["fdr_ratio"] = entry["fdr"] / baseline_fdr

    correlation = {
        method: _correlation_section(method_records, config)
        for method, method_records in by_method.items()
    }

    return {
        "engine_version": engine_version,
        "config": config_to_dict(config),
        "seeds": {"accepted": seed_count, "excluded": len(exclusions),
                  "exclusions": [
                      {"id": e.id, "reason": e.reason,
                       "true_class": e.true_class, "predicted_class": e.predicted_class}
                      for e in exclusions
                  ]},
        "total_trials": len(records),
        "baseline_fdr": baseline_fdr,
        "methods": methods_section,
        "correlation": correlation,
        "timings_s": dict(timings or {}),
    }


def config_to_dict(config: CampaignConfig) -> dict:
    out = {}
    for f in fields(CampaignConfig):
        value = getattr(config, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


@dataclass
class CampaignResult:
    records: list[TrialRecord]
    report: dict
    seeds: list[seeds_mod.SeedImage]
    exclusions: list[seeds_mod.SeedExclusion]


def run_campaign(config: CampaignConfig, *, jobs: int = 1, log=None) -> CampaignResult:
    """Execute the whole campaign; the trial stream is jobs-independent."""
    from . import __version__

    t0 = time.monotonic()
    model = model_io.load_model(config.model)
    sensitivity.check_rect_fits((config.rect_height, config.rect_width),
                                (model.input_shape[1], model.input_shape[2]))
    seed_list, exclusions = seeds_mod.load_seed_set(config.seeds, model, log=log)
    t_load = time.monotonic() - t0

    t1 = time.monotonic()
    if jobs > 1 and len(seed_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_worker_init,
                                 initargs=(config.model, config)) as pool:
            per_seed = list(pool.map(_worker_run, seed_list,
                                     chunksize=max(1, len(seed_list) // (jobs * 4))))
    else:
        per_seed = [seed_trials(model, config, seed) for seed in seed_list]
    records = [record for seed_records in per_seed for record in seed_records]
    t_trials = time.monotonic() - t1

    t2 = time.monotonic()
    report = build_report(records, config, engine_version=__version__,
                          seed_count=len(seed_list), exclusions=exclusions)
    t_analysis = time.monotonic() - t2
    report["timings_s"] = {"load": t_load, "trials": t_trials,
                           "analysis": t_analysis, "total": time.monotonic() - t0}
    return CampaignResult(records=records, report=report,
                          seeds=seed_list, exclusions=exclusions)


def tripped_methods(report: dict, fail_threshold: float | None) -> list[str]:
    """Methods whose failure rate exceeds the CI gate threshold."""
    if fail_threshold is None:
        return []
    tripped = []
    for method, entry in report.get("methods", {}).items():
        if entry.get("fdr") is not None and entry["fdr"] > fail_threshold:
            tripped.append(method)
    return tripped


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def trials_csv_text(records) -> str:
    lines = [",".join(TRIALS_COLUMNS)]
    for r in records:
        lines.append(",".join((
            r.seed_id, r.method, r.transform,
            str(r.rect.top), str(r.rect.left), str(r.rect.width), str(r.rect.height),
            repr(float(r.center_gradient)), str(r.pred_before), str(r.pred_after),
            r.verdict,
        )))
    return "\n".join(lines) + "\n"


def write_trials_csv(records, path) -> None:
    _atomic_write(path, trials_csv_text(records))


def read_trials_csv(path) -> list[TrialRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRIALS_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: trials file missing columns {sorted(missing)}")
        for row in reader:
            records.append(TrialRecord(
                seed_id=row["seed_id"],
                method=row["method"],
                transform=row["transform"],
                rect=Rect(int(row["top"]), int(row["left"]),
                          int(row["height"]), int(row["width"])),
                center_gradient=float(row["center_gradient"]),
                pred_before=int(row["pred_before"]),
                pred_after=int(row["pred_after"]),
            ))
    return records


def write_report_json(report: dict, path) -> None:
    _atomic_write(path, json.dumps(report, indent=2, sort_keys=True) + "\n")


def write_bins_csv(report: dict, path) -> None:
    lines = ["method,bin_lo,bin_hi,trials,negatives,fdr"]
    for method, section in report.get("correlation", {}).items():
        for b in section["bins"]:
            fdr_text = "" if b["fdr"] is None else repr(b["fdr"])
            lines.append(f"{method},{b['lo']!r},{b['hi']!r},{b['trials']},"
                         f"{b['negatives']},{fdr_text}")
    _atomic_write(path, "\n".join(lines) + "\n")


def write_artifacts(result: CampaignResult, out_dir) -> dict:
    out = Path(out_dir)
    write_trials_csv(result.records, out / "trials.csv")
    write_report_json(result.report, out / "report.json")
    write_bins_csv(result.report, out / "bins.csv")
    return {"trials": out / "trials.csv", "report": out / "report.json",
            "bins": out / "bins.csv"}
