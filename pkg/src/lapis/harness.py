"""Scoring and ablation harness for hypothesis-assessment runs.

Accuracy and F1 are computed per subject and in total, with True as the
positive class by default. Unparseable responses count as incorrect: they
stay in the denominator, never in tp/tn, and a missed True-labelled instance
hurts recall exactly like a False prediction would.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import SUBJECTS, DataInstance, dataset_hash
from .evaluator import (
    GenerationParams,
    GenerationService,
    ModelResponse,
    TransportError,
    assess_hypothesis,
    prompt_hash,
)
from .prompting import Exemplar, PromptStrategy, build_prompt, select_exemplars
from .retriever import RetrievalQuery, Retriever

SUBJECT_TITLES = {
    "criminal_law": "Criminal Law",
    "criminal_procedure_law": "Criminal Procedure Law",
    "crime_investigation": "Crime Investigation",
}

F1_MODES = ("binary_true", "macro")


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    unparseable: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn + self.unparseable

    def add(self, other: "ConfusionCounts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.tn += other.tn
        self.fn += other.fn
        self.unparseable += other.unparseable

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "unparseable": self.unparseable,
        }


@dataclass
class _Tally:
    """Per-group prediction bookkeeping; unparseables tracked by truth label."""

    counts: ConfusionCounts = field(default_factory=ConfusionCounts)
    unparseable_true: int = 0

    def record(self, truth: bool, predicted: bool | None) -> None:
        if predicted is None:
            self.counts.unparseable += 1
            if truth:
                self.unparseable_true += 1
        elif predicted and truth:
            self.counts.tp += 1
        elif predicted and not truth:
            self.counts.fp += 1
        elif not predicted and not truth:
            self.counts.tn += 1
        else:
            self.counts.fn += 1

    def accuracy(self) -> float:
        n = self.counts.total
        return (self.counts.tp + self.counts.tn) / n if n else 0.0

    def _f1(self, positive: bool) -> float:
        # single-division form 2*tp / (predicted_pos + truth_pos): equal to the
        # harmonic mean of precision and recall, without intermediate rounding
        c = self.counts
        if positive:
            tp, predicted_pos = c.tp, c.tp + c.fp
            truth_pos = c.tp + c.fn + self.unparseable_true
        else:
            tp, predicted_pos = c.tn, c.tn + c.fn
            truth_pos = c.tn + c.fp + (c.unparseable - self.unparseable_true)
        if predicted_pos + truth_pos == 0:
            return 0.0
        return 2 * tp / (predicted_pos + truth_pos)

    def f1(self, mode: str = "binary_true") -> float:
        if mode == "binary_true":
            return self._f1(positive=True)
        if mode == "macro":
            return (self._f1(positive=True) + self._f1(positive=False)) / 2
        raise ValueError(f"unknown f1 mode {mode!r}")


@dataclass
class SubjectScore:
    counts: ConfusionCounts
    accuracy: float
    f1: float

    def to_dict(self) -> dict:
        return {
            "counts": self.counts.to_dict(),
            "accuracy": self.accuracy,
            "f1": self.f1,
        }


@dataclass
class EvalReport:
    per_subject: dict[str, SubjectScore]
    total: SubjectScore
    config: dict
    f1_mode: str = "binary_true"

    def to_dict(self) -> dict:
        return {
            "per_subject": {s: v.to_dict() for s, v in self.per_subject.items()},
            "total": self.total.to_dict(),
            "config": self.config,
            "f1_mode": self.f1_mode,
        }


def score(
    predictions: list[tuple[str, ModelResponse]],
    instances: list[DataInstance],
    f1_mode: str = "binary_true",
    config: dict | None = None,
) -> EvalReport:
    """Score exactly one prediction per instance into per-subject and total metrics."""
    if f1_mode not in F1_MODES:
        raise ValueError(f"unknown f1 mode {f1_mode!r}")
    by_id = {instance.id: instance for instance in instances}
    seen: set[str] = set()
    tallies = {subject: _Tally() for subject in SUBJECTS}
    total = _Tally()

    for instance_id, response in predictions:
        if instance_id not in by_id:
            raise ValueError(f"prediction for unknown instance {instance_id!r}")
        if instance_id in seen:
            raise ValueError(f"duplicate prediction for instance {instance_id!r}")
        seen.add(instance_id)
        instance = by_id[instance_id]
        predicted = response.assessment if response.parse_status == "ok" else None
        tallies[instance.subject].record(instance.ground_truth, predicted)
        total.record(instance.ground_truth, predicted)

    missing = sorted(set(by_id) - seen)
    if missing:
        raise ValueError(f"missing predictions for instances: {missing[:5]}")

    per_subject = {
        subject: SubjectScore(
            counts=t.counts, accuracy=t.accuracy(), f1=t.f1(f1_mode)
        )
        for subject, t in tallies.items()
    }
    return EvalReport(
        per_subject=per_subject,
        total=SubjectScore(counts=total.counts, accuracy=total.accuracy(), f1=total.f1(f1_mode)),
        config=config or {},
        f1_mode=f1_mode,
    )


@dataclass(frozen=True)
class EvalConfig:
    model_id: str
    strategy: PromptStrategy
    dataset_split: str = "test"
    k: int = 5
    exemplar_seed: int = 0
    locale: str = "en"
    params: GenerationParams = field(default_factory=GenerationParams)
    exclusions: tuple[str, ...] = ()
    f1_mode: str = "binary_true"
    retry_cap: int = 2

    @property
    def uses_cikr(self) -> bool:
        return self.strategy.uses_cikr

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "method": self.strategy.label,
            "uses_cikr": self.uses_cikr,
            "shots": self.strategy.shots,
            "dataset_split": self.dataset_split,
            "k": self.k,
            "exemplar_seed": self.exemplar_seed,
            "locale": self.locale,
            "params": self.params.to_dict(),
            "exclusions": list(self.exclusions),
            "f1_mode": self.f1_mode,
        }


def run_evaluation(
    config: EvalConfig,
    instances: list[DataInstance],
    service: GenerationService,
    retriever: Retriever | None = None,
    exemplar_pool: list[Exemplar] | None = None,
    artifacts_path: str | Path | None = None,
) -> EvalReport:
    """Retrieve (when configured), prompt, assess and score one split.

    Per-instance transport failures (after retries) are recorded as
    unparseable; the run always completes. Raw responses can be persisted
    for audit.
    """
    split_instances = [i for i in instances if i.split == config.dataset_split]
    if not split_instances:
        raise ValueError(f"no instances in split {config.dataset_split!r}")
    if config.uses_cikr and retriever is None:
        raise ValueError("CIKR-enabled config requires a retriever")
    exemplar_pool = exemplar_pool or []

    exemplars = select_exemplars(
        exemplar_pool, config.strategy.shots, config.exemplar_seed
    )

    predictions: list[tuple[str, ModelResponse]] = []
    artifacts: list[dict] = []
    for instance in split_instances:
        premises = None
        if config.uses_cikr:
            premises = retriever.retrieve_premises(
                RetrievalQuery(instance.context, instance.hypothesis, k=config.k)
            )
        bundle = build_prompt(
            config.strategy,
            instance.context,
            instance.hypothesis,
            premises=premises,
            exemplars=exemplars,
            locale=config.locale,
        )
        try:
            response = assess_hypothesis(
                bundle, service, config.params, retry_cap=config.retry_cap
            )
        except TransportError as exc:
            response = ModelResponse(raw="", parse_status="unparseable", error=str(exc))
        predictions.append((instance.id, response))
        artifacts.append(
            {
                "instance_id": instance.id,
                "prompt_hash": prompt_hash(bundle.rendered),
                "raw": response.raw,
                "parse_status": response.parse_status,
                "assessment": response.assessment,
                "error": response.error,
            }
        )

    if artifacts_path is not None:
        with open(artifacts_path, "w", encoding="utf-8") as f:
            for rec in artifacts:
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")

    config_echo = config.to_dict()
    config_echo["dataset_hash"] = dataset_hash(split_instances)
    return score(
        predictions, split_instances, f1_mode=config.f1_mode, config=config_echo
    )


@dataclass
class MatrixResult:
    reports: list[EvalReport]
    errors: list[tuple[str, str]]
    table: str


def ablation_matrix(
    configs: list[EvalConfig],
    instances: list[DataInstance],
    services: dict[str, GenerationService],
    retriever: Retriever | None = None,
    exemplar_pool: list[Exemplar] | None = None,
) -> MatrixResult:
    """Run every config; failures are collected and the matrix continues."""
    if not configs:
        raise ValueError("ablation matrix needs at least one config")
    reports: list[EvalReport] = []
    errors: list[tuple[str, str]] = []
    for config in configs:
        service = services.get(config.model_id)
        if service is None:
            errors.append((config.model_id, f"no service registered for {config.model_id!r}"))
            continue
        try:
            reports.append(
                run_evaluation(
                    config,
                    instances,
                    service,
                    retriever=retriever,
                    exemplar_pool=exemplar_pool,
                )
            )
        except Exception as exc:  # noqa: BLE001 - matrix must finish remaining runs
            errors.append((config.model_id, str(exc)))
    reports.sort(key=lambda r: -r.total.accuracy)
    return MatrixResult(reports=reports, errors=errors, table=render_comparison_table(reports))


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def render_report(report: EvalReport) -> str:
    """Single-run report: config echo plus per-subject and total metric rows."""
    lines = [
        f"model: {report.config.get('model_id', '?')}  "
        f"method: {report.config.get('method', '?')}  "
        f"CIKR: {'O' if report.config.get('uses_cikr') else 'X'}",
        f"f1 positive class: {'True' if report.f1_mode == 'binary_true' else 'macro'}  "
        "unparseable: counted incorrect",
    ]
    params = report.config.get("params")
    if params:
        lines.append(
            f"decoding: temperature={params['temperature']} max_tokens={params['max_tokens']}"
        )
    lines.append("")
    for subject in SUBJECTS:
        s = report.per_subject[subject]
        lines.append(
            f"{SUBJECT_TITLES[subject]:<24} ACC {_fmt(s.accuracy)}  F1 {_fmt(s.f1)}  "
            f"(tp={s.counts.tp} fp={s.counts.fp} tn={s.counts.tn} fn={s.counts.fn} "
            f"unparseable={s.counts.unparseable})"
        )
    t = report.total
    lines.append(
        f"{'Total':<24} ACC {_fmt(t.accuracy)}  F1 {_fmt(t.f1)}  "
        f"(n={t.counts.total})"
    )
    return "\n".join(lines)


def render_comparison_table(reports: list[EvalReport]) -> str:
    """Comparison grid: Model / Method / CIKR / per-subject ACC,F1 / Total."""
    header = ["Model", "Method", "CIKR"]
    for subject in SUBJECTS:
        header.extend([f"{SUBJECT_TITLES[subject]} ACC", "F1"])
    header.extend(["Total ACC", "F1"])

    rows = [header]
    for report in sorted(reports, key=lambda r: -r.total.accuracy):
        row = [
            str(report.config.get("model_id", "?")),
            str(report.config.get("method", "?")),
            "O" if report.config.get("uses_cikr") else "X",
        ]
        for subject in SUBJECTS:
            s = report.per_subject[subject]
            row.extend([_fmt(s.accuracy), _fmt(s.f1)])
        row.extend([_fmt(report.total.accuracy), _fmt(report.total.f1)])
        rows.append(row)

    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
