"""Batch experiment runner.

Reads a JSON experiment config, simulates label or covariate shift over a
CSV dataset, evaluates the configured methods on the exact same generated
samples, and writes deterministic reports:

  results.csv   one row per (method, sample, metric)
  summary.json  per-method mean metric and mean rank
  by_shift.csv  metric means binned by shift-intensity decile

Identical configs and seeds produce byte-identical outputs regardless of
the worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import bridges, calibrate, cap, models, quantify
from .core import (
    DEFAULT_THRESHOLD,
    DataError,
    LabeledSet,
    ScoredSet,
    SplitSpec,
    load_csv,
    split_stratified,
)
from .evaluation import (
    METRIC_AE_ACC,
    METRIC_AE_QUANT,
    METRIC_BRIER,
    METRIC_ECE,
    PROTOCOL_APP,
    PROTOCOL_CS_MIXTURE,
    PROTOCOL_UNIFORM,
    EstimateRecord,
    SampleProtocol,
    app_prevalences,
    app_samples,
    brier,
    cs_mixture_samples,
    cs_mixture_source_counts,
    ece_l2,
    shift_intensity,
)
from .oracles import OracleContext, verify_reductions

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_LEMMA = 3

TASK_QUANT = "quantification"
TASK_CALIB = "calibration"
TASK_ACC = "accuracy"

RESULT_COLUMNS = ("method", "dataset", "sample_id", "shift_intensity", "metric", "value")


class ConfigError(Exception):
    """Raised for malformed experiment configurations."""


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    shift: str
    dataset: str | None
    source_dataset: str | None
    target_dataset: str | None
    classifier_kind: str
    classifier_params: dict
    methods: tuple[str, ...]
    protocol: SampleProtocol
    split: SplitSpec
    seed: int
    out_dir: str

    @classmethod
    def from_dict(cls, doc: dict, seed_override: int | None = None,
                  out_override: str | None = None) -> "ExperimentConfig":
        try:
            task = doc["task"]
            shift = doc["shift"]
            classifier = dict(doc["classifier"])
            kind = classifier.pop("kind")
            methods = tuple(doc["methods"])
        except KeyError as exc:
            raise ConfigError(f"config missing required key: {exc}") from exc
        if task not in (TASK_QUANT, TASK_CALIB, TASK_ACC):
            raise ConfigError(f"unknown task {task!r}")
        if shift not in ("LS", "CS"):
            raise ConfigError(f"unknown shift {shift!r}")
        seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)

        dataset = doc.get("dataset")
        source = doc.get("source_dataset")
        target = doc.get("target_dataset")
        if shift == "LS" and dataset is None:
            raise ConfigError("LS experiments need a 'dataset' path")
        if shift == "CS" and (source is None or target is None):
            raise ConfigError("CS experiments need 'source_dataset' and 'target_dataset' paths")

        proto_doc = doc.get("protocol", {})
        protocol = SampleProtocol(
            kind=PROTOCOL_APP if shift == "LS" else PROTOCOL_CS_MIXTURE,
            n_samples=int(proto_doc.get("n_samples", 100)),
            size=int(proto_doc.get("size", 250)),
            seed=seed,
        )
        split_doc = doc.get("split", {})
        split = SplitSpec(
            train_fraction=float(split_doc.get("train_fraction", 0.5)),
            val_fraction=float(split_doc.get("val_fraction", 0.25)),
            test_fraction=float(split_doc.get("test_fraction", 0.25)),
            seed=seed,
        )
        registry = method_registry(task)
        unknown = [m for m in methods if m not in registry]
        if unknown:
            raise ConfigError(
                f"unknown {task} methods {unknown}; valid: {sorted(registry)}")
        if not methods:
            raise ConfigError("config lists no methods")
        out_dir = out_override or doc.get("out_dir", "results")
        return cls(task, shift, dataset, source, target, kind, classifier,
                   methods, protocol, split, seed, str(out_dir))

    @property
    def dataset_label(self) -> str:
        if self.shift == "LS":
            return Path(self.dataset).stem
        return f"{Path(self.source_dataset).stem}->{Path(self.target_dataset).stem}"


@dataclass
class MethodContext:
    """Fitted state shared by all methods across all test samples."""

    model: object
    val: LabeledSet
    val_scored: ScoredSet
    train_prior: float
    t: float
    bridge: bridges.BridgeConfig
    doc_protocol: SampleProtocol
    dmcal_bins: int = 8

    @cached_property
    def platt(self) -> calibrate.Calibrator:
        return calibrate.platt_fit(self.val_scored)

    @cached_property
    def crisp_rates(self) -> quantify.RateEstimates:
        return quantify.rates_from_scores(self.val_scored, soft=False, t=self.t)

    @cached_property
    def soft_rates(self) -> quantify.RateEstimates:
        return quantify.rates_from_scores(self.val_scored, soft=True, t=self.t)

    @cached_property
    def doc_regressor(self) -> cap.DocRegressor:
        return cap.doc_fit_scored(self.val_scored, self.doc_protocol, self.t)

    @cached_property
    def naive_accuracy(self) -> float:
        return cap.accuracy_from_scores(self.val_scored, self.t)


# ---------------------------------------------------------------------------
# bridge-shaped adapters for the registry

def _q_cc(val, test):
    return quantify.cc(test.posteriors).p


def _q_pcc(val, test):
    return quantify.pcc(test.posteriors).p


def _q_acc(val, test):
    return quantify.adjust(quantify.cc(test.posteriors).p,
                           quantify.rates_from_scores(val, soft=False)).p


def _q_pacc(val, test):
    return quantify.pacc_from_scores(val, test.posteriors).p


def _q_emq(val, test):
    prior = float(val.require_labels().mean())
    return quantify.emq(test.posteriors, prior)[0].p


def _q_hdy(val, test):
    return quantify.hdy(val, test.posteriors).p


def _q_kdey(val, test):
    return quantify.kdey(val, test.posteriors).p


_QUANTIFIER_ADAPTERS = {
    "cc": _q_cc, "pcc": _q_pcc, "acc": _q_acc, "pacc": _q_pacc,
    "emq": _q_emq, "hdy": _q_hdy, "kdey": _q_kdey,
}


def _a_naive(val, test, t):
    return cap.accuracy_from_scores(val, t)


def _a_atc_mc(val, test, t):
    return cap.atc(val, test.posteriors, cap.SCORE_MAX_CONFIDENCE, t).acc


def _a_atc_ne(val, test, t):
    return cap.atc(val, test.posteriors, cap.SCORE_NEG_ENTROPY, t).acc


_ACC_ADAPTERS = {"naive": _a_naive, "atc": _a_atc_mc, "atc-ne": _a_atc_ne}


def _cf_platt(val, test):
    return calibrate.platt_fit(val)


def _cf_dmcal(val, test):
    return calibrate.dmcal_fit(val, test.posteriors)


_CALIBRATOR_FACTORIES = {"platt": _cf_platt, "dmcal": _cf_dmcal}


def _doc_adapter(ctx: MethodContext):
    def predict(val, test, t):
        reg = cap.doc_fit_scored(val, ctx.doc_protocol, t)
        return cap.doc_predict(reg, test.posteriors).acc
    return predict


# ---------------------------------------------------------------------------
# method registry: name -> fn(ctx, sample: LabeledSet, scored: ScoredSet)

def _quant_method(name):
    def run(ctx, sample, scored):
        post = scored.posteriors
        if name == "cc":
            return quantify.cc(post, ctx.t).p
        if name == "pcc":
            return quantify.pcc(post).p
        if name == "acc":
            return quantify.adjust(quantify.cc(post, ctx.t).p, ctx.crisp_rates).p
        if name == "pacc":
            return quantify.adjust(quantify.pcc(post).p, ctx.soft_rates).p
        if name == "emq":
            return quantify.emq(post, ctx.train_prior)[0].p
        if name == "hdy":
            return quantify.hdy(ctx.val_scored, post).p
        if name == "kdey":
            return quantify.kdey(ctx.val_scored, post).p
        if name == "platt-z2q":
            return bridges.cal_to_quant(ctx.platt, post).p
        if name == "dmcal-z2q":
            cal = calibrate.dmcal_fit(ctx.val_scored, post, ctx.dmcal_bins)
            return bridges.cal_to_quant(cal, post).p
        if name == "atc-a2q":
            return bridges.acc_to_quant(_a_atc_mc, ctx.model, ctx.val, sample, ctx.t).p
        if name == "naive-a2q":
            return bridges.acc_to_quant(_a_naive, ctx.model, ctx.val, sample, ctx.t).p
        if name == "doc-a2q":
            return bridges.acc_to_quant(_doc_adapter(ctx), ctx.model, ctx.val, sample, ctx.t).p
        raise ConfigError(f"unhandled quantification method {name!r}")
    return run


def _calib_method(name):
    def run(ctx, sample, scored):
        post = scored.posteriors
        if name == "raw":
            return post
        if name == "platt":
            return ctx.platt(post)
        if name == "paccal":
            return calibrate.paccal_from_scores(ctx.val_scored, post, ctx.t)(post)
        if name == "dmcal":
            return calibrate.dmcal_fit(ctx.val_scored, post, ctx.dmcal_bins)(post)
        if name == "emq":
            return calibrate.emq_calibrate(post, ctx.train_prior)
        if name.endswith("-q2c"):
            quantifier = _QUANTIFIER_ADAPTERS[name[:-4]]
            cal = bridges.quant_to_cal(quantifier, ctx.val_scored, post,
                                       ctx.bridge.bins_quant_to_cal)
            return cal(post)
        if name.endswith("-a2c"):
            base = name[:-4]
            predictor = _doc_adapter(ctx) if base == "doc" else _ACC_ADAPTERS[base]
            cal = bridges.acc_to_cal(predictor, ctx.model, ctx.val, post,
                                     ctx.bridge.bins_acc_to_cal, ctx.t)
            return cal(post)
        raise ConfigError(f"unhandled calibration method {name!r}")
    return run


def _acc_method(name):
    def run(ctx, sample, scored):
        post = scored.posteriors
        if name == "naive":
            return ctx.naive_accuracy
        if name == "atc-mc":
            return cap.atc(ctx.val_scored, post, cap.SCORE_MAX_CONFIDENCE, ctx.t).acc
        if name == "atc-ne":
            return cap.atc(ctx.val_scored, post, cap.SCORE_NEG_ENTROPY, ctx.t).acc
        if name == "doc":
            return cap.doc_predict(ctx.doc_regressor, post).acc
        if name.endswith("-z2a"):
            factory = _CALIBRATOR_FACTORIES[name[:-4]]
            return bridges.cal_to_acc(factory, ctx.model, ctx.val, sample, ctx.t).acc
        if name.endswith("-q2a"):
            quantifier = _QUANTIFIER_ADAPTERS[name[:-4]]
            return bridges.quant_to_acc(quantifier, ctx.model, ctx.val, sample, ctx.t).acc
        raise ConfigError(f"unhandled accuracy method {name!r}")
    return run


def method_registry(task: str) -> dict:
    if task == TASK_QUANT:
        names = ["cc", "pcc", "acc", "pacc", "emq", "hdy", "kdey",
                 "platt-z2q", "dmcal-z2q", "atc-a2q", "naive-a2q", "doc-a2q"]
        return {n: _quant_method(n) for n in names}
    if task == TASK_CALIB:
        names = ["raw", "platt", "paccal", "dmcal", "emq",
                 "cc-q2c", "pcc-q2c", "pacc-q2c", "emq-q2c", "hdy-q2c", "kdey-q2c",
                 "atc-a2c", "atc-ne-a2c", "naive-a2c", "doc-a2c"]
        return {n: _calib_method(n) for n in names}
    if task == TASK_ACC:
        names = ["naive", "atc-mc", "atc-ne", "doc", "platt-z2a", "dmcal-z2a",
                 "cc-q2a", "pcc-q2a", "pacc-q2a", "emq-q2a", "hdy-q2a", "kdey-q2a"]
        return {n: _acc_method(n) for n in names}
    raise ConfigError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# experiment execution

def _evaluate_sample(payload):
    """Evaluate every configured method on one generated test sample."""
    ctx, task, methods, dataset, sample_id, shift, sample = payload
    scored = ScoredSet(ctx.model.predict_posteriors(sample.features), sample.labels)
    registry = method_registry(task)
    records = []
    for name in methods:
        outcome = registry[name](ctx, sample, scored)
        if task == TASK_QUANT:
            value = abs(sample.prevalence - float(outcome))
            rows = [(METRIC_AE_QUANT, value)]
        elif task == TASK_ACC:
            truth = float((models.crisp(scored.posteriors, ctx.t) == sample.labels).mean())
            rows = [(METRIC_AE_ACC, abs(truth - float(outcome)))]
        else:
            calibrated = np.asarray(outcome, dtype=float)
            # report 100 x ECE; Brier stays on its natural scale
            rows = [(METRIC_ECE, 100.0 * ece_l2(calibrated, sample.labels)),
                    (METRIC_BRIER, brier(calibrated, sample.labels))]
        for metric, value in rows:
            records.append(EstimateRecord(name, dataset, sample_id, shift, metric, value))
    return records


def build_context(config: ExperimentConfig, train: LabeledSet, val: LabeledSet) -> MethodContext:
    model = models.fit(config.classifier_kind, train, **config.classifier_params)
    val_scored = ScoredSet(model.predict_posteriors(val.features), val.labels)
    doc_proto = SampleProtocol(
        kind=PROTOCOL_APP if config.shift == "LS" else PROTOCOL_UNIFORM,
        n_samples=100, size=250, seed=config.seed + 1,
    )
    return MethodContext(
        model=model, val=val, val_scored=val_scored,
        train_prior=train.prevalence, t=DEFAULT_THRESHOLD,
        bridge=bridges.BridgeConfig(), doc_protocol=doc_proto,
    )


def generate_samples(config: ExperimentConfig):
    """Load data, fit the classifier, and realize the shifted test samples.

    Returns (context, samples, per-sample shift intensities)."""
    if config.shift == "LS":
        data = load_csv(config.dataset)
        train, val, test_pool = split_stratified(data, config.split)
        ctx = build_context(config, train, val)
        samples = app_samples(test_pool, config.protocol)
        shifts = [shift_intensity("LS", train_prev=train.prevalence,
                                  sample_prev=s.prevalence) for s in samples]
    else:
        source = load_csv(config.source_dataset)
        target = load_csv(config.target_dataset)
        train, val, test_a = split_stratified(source, config.split)
        ctx = build_context(config, train, val)
        samples = cs_mixture_samples(test_a, target, config.protocol)
        counts = cs_mixture_source_counts(config.protocol)
        shifts = [shift_intensity("CS", mixture_fraction=1.0 - n_src / config.protocol.size)
                  for n_src in counts]
    return ctx, samples, shifts


def _warm_caches(ctx: MethodContext, config: ExperimentConfig) -> None:
    # fit shared state once in the parent so workers inherit it
    needs = set(config.methods)
    if needs & {"platt", "platt-z2q", "platt-z2a"}:
        ctx.platt
    if needs & {"acc"}:
        ctx.crisp_rates
    if needs & {"pacc"}:
        ctx.soft_rates
    if needs & {"doc"}:
        ctx.doc_regressor
    if needs & {"naive"}:
        ctx.naive_accuracy


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> dict:
    """Execute the configured experiment and write the three report files."""
    ctx, samples, shifts = generate_samples(config)
    _warm_caches(ctx, config)
    dataset = config.dataset_label
    payloads = [
        (ctx, config.task, config.methods, dataset, i, shifts[i], samples[i])
        for i in range(len(samples))
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_sample = list(pool.map(_evaluate_sample, payloads, chunksize=4))
    else:
        per_sample = [_evaluate_sample(p) for p in payloads]
    records = [rec for batch in per_sample for rec in batch]
    records.sort(key=lambda r: (r.method, r.sample_id, r.metric))

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": out_dir / "results.csv",
        "summary": out_dir / "summary.json",
        "by_shift": out_dir / "by_shift.csv",
    }
    _write_results(paths["results"], records)
    _write_summary(paths["summary"], config, records)
    _write_by_shift(paths["by_shift"], records)
    return paths


def _write_results(path: Path, records) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in records:
            writer.writerow([r.method, r.dataset, r.sample_id,
                             repr(r.shift_intensity), r.metric, repr(r.value)])


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _write_summary(path: Path, config: ExperimentConfig, records) -> None:
    metrics = sorted({r.metric for r in records})
    methods = sorted({r.method for r in records})
    table = {}
    for metric in metrics:
        by_sample = {}
        for r in records:
            if r.metric == metric:
                by_sample.setdefault(r.sample_id, {})[r.method] = r.value
        sums = {m: 0.0 for m in methods}
        rank_sums = {m: 0.0 for m in methods}
        count = 0
        for sample_id in sorted(by_sample):
            row = by_sample[sample_id]
            vals = np.array([row[m] for m in methods])
            ranks = _average_ranks(vals)
            for m, v, rk in zip(methods, vals, ranks):
                sums[m] += v
                rank_sums[m] += rk
            count += 1
        table[metric] = {
            m: {"mean": sums[m] / count, "mean_rank": rank_sums[m] / count}
            for m in methods
        }
    doc = {
        "task": config.task,
        "shift": config.shift,
        "dataset": config.dataset_label,
        "seed": config.seed,
        "n_samples": config.protocol.n_samples,
        "sample_size": config.protocol.size,
        "metrics": table,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_by_shift(path: Path, records) -> None:
    bins = {}
    for r in records:
        decile = min(int(r.shift_intensity * 10), 9)
        key = (r.method, r.metric, decile)
        total, count = bins.get(key, (0.0, 0))
        bins[key] = (total + r.value, count + 1)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "metric", "shift_lo", "shift_hi", "mean_value", "count"])
        for (method, metric, decile) in sorted(bins):
            total, count = bins[(method, metric, decile)]
            writer.writerow([method, metric, repr(decile / 10), repr((decile + 1) / 10),
                             repr(total / count), count])


# ---------------------------------------------------------------------------
# lemma check

def lemma_check(dataset_path: str, classifier_kind: str, seed: int,
                out_dir: str = "results", classifier_params: dict | None = None) -> int:
    """Verify the six oracle reductions on a dataset; exit 0 iff exact."""
    data = load_csv(dataset_path)
    train, _, test = split_stratified(data, SplitSpec(seed=seed))
    model = models.fit(classifier_kind, train, **(classifier_params or {}))
    report = verify_reductions(OracleContext.from_model(model, test))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "lemma_report.json").write_text(report.to_json() + "\n")
    print(report.format_table())
    return EXIT_OK if report.all_passed else EXIT_LEMMA


# ---------------------------------------------------------------------------
# command-line interface

def _load_config(path: str, seed: int | None, out: str | None) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc, seed_override=seed, out_override=out)


def _cmd_run(args) -> int:
    config = _load_config(args.config, args.seed, args.out)
    paths = run_experiment(config, jobs=args.jobs)
    print(f"wrote {paths['results']}, {paths['summary']}, {paths['by_shift']}")
    return EXIT_OK


def _cmd_lemma_check(args) -> int:
    return lemma_check(args.dataset, args.classifier, args.seed, args.out or "results")


def _cmd_protocols(args) -> int:
    config = _load_config(args.config, args.seed, args.out)
    writer = csv.writer(sys.stdout)
    if config.shift == "LS":
        writer.writerow(["sample_id", "target_prevalence", "positive_count"])
        for i, p in enumerate(app_prevalences(config.protocol)):
            writer.writerow([i, repr(float(p)), int(np.ceil(p * config.protocol.size))])
    else:
        writer.writerow(["sample_id", "source_count", "target_fraction"])
        for i, n_src in enumerate(cs_mixture_source_counts(config.protocol)):
            writer.writerow([i, int(n_src), repr(1.0 - n_src / config.protocol.size)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftbridge",
        description="Dataset-shift experiments: calibration, quantification, "
                    "accuracy prediction, and cross-task adaptations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("--config", required=True, help="JSON experiment config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--jobs", type=int, default=1, help="parallel workers over samples")
    run.add_argument("--out", default=None, help="override the output directory")
    run.set_defaults(fn=_cmd_run)

    lemma = sub.add_parser("lemma-check", help="verify the oracle reductions on a dataset")
    lemma.add_argument("--dataset", required=True, help="CSV dataset path")
    lemma.add_argument("--classifier", default=models.KNN, choices=models.KINDS)
    lemma.add_argument("--seed", type=int, default=0)
    lemma.add_argument("--out", default=None, help="report directory")
    lemma.set_defaults(fn=_cmd_lemma_check)

    proto = sub.add_parser("protocols", help="protocol utilities")
    proto_sub = proto.add_subparsers(dest="subcommand", required=True)
    preview = proto_sub.add_parser("preview", help="dump the generated sample plan")
    preview.add_argument("--config", required=True)
    preview.add_argument("--seed", type=int, default=None)
    preview.add_argument("--out", default=None)
    preview.set_defaults(fn=_cmd_protocols)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
