"""Dataset construction pipeline for hypothesis-assessment instances.

Exam multiple-choice questions explode into one True/False instance per
option, split by exam year (train 2013-2019, dev 2020, test 2021-2023).
Train/dev instances accumulate rationales from prompting strategies, filtered
to those whose predicted assessment matches ground truth, then merged with
expert curation. The test split stays bare: context, hypothesis, label only.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

from .evaluator import (
    GenerationParams,
    GenerationService,
    ModelResponse,
    TransportError,
    assess_hypothesis,
    extract_ref_nos,
    prompt_hash,
    render_response,
    Rationale,
)
from .prompting import (
    Exemplar,
    PromptStrategy,
    build_prompt,
    select_exemplars,
)
from .retriever import PremiseSet, Premise, RetrievalQuery, Retriever

SUBJECTS = ("criminal_law", "criminal_procedure_law", "crime_investigation")
SPLITS = ("train", "dev", "test")

YEAR_MIN, YEAR_MAX = 2013, 2023

TRAIN_YEARS = range(2013, 2020)
DEV_YEARS = range(2020, 2021)
TEST_YEARS = range(2021, 2024)


class CurationError(ValueError):
    """Curation file references unknown instances or rationales."""


@dataclass(frozen=True)
class ExamOption:
    text: str
    is_true: bool


@dataclass(frozen=True)
class ExamQuestion:
    id: str
    year: int
    subject: str
    context: str
    options: tuple[ExamOption, ...]

    def __post_init__(self):
        if not YEAR_MIN <= self.year <= YEAR_MAX:
            raise ValueError(f"year {self.year} outside {YEAR_MIN}..{YEAR_MAX}")
        if self.subject not in SUBJECTS:
            raise ValueError(f"unknown subject {self.subject!r}")
        if len(self.options) < 2:
            raise ValueError(f"question {self.id!r} needs at least 2 options")


@dataclass
class DataInstance:
    id: str
    year: int
    subject: str
    context: str
    hypothesis: str
    ground_truth: bool
    premises: PremiseSet | None = None
    rationales: list[Rationale] = field(default_factory=list)
    split: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "year": self.year,
            "subject": self.subject,
            "context": self.context,
            "hypothesis": self.hypothesis,
            "ground_truth": self.ground_truth,
            "premises": (
                [vars(p) for p in self.premises] if self.premises is not None else None
            ),
            "rationales": [r.to_dict() for r in self.rationales],
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "DataInstance":
        premises = rec.get("premises")
        return cls(
            id=rec["id"],
            year=rec["year"],
            subject=rec["subject"],
            context=rec["context"],
            hypothesis=rec["hypothesis"],
            ground_truth=rec["ground_truth"],
            premises=(
                PremiseSet(tuple(Premise(**p) for p in premises))
                if premises is not None
                else None
            ),
            rationales=[Rationale.from_dict(r) for r in rec.get("rationales", [])],
            split=rec.get("split"),
        )


def explode_mcq(question: ExamQuestion) -> list[DataInstance]:
    """One instance per option; the option's truth value is the label."""
    return [
        DataInstance(
            id=f"{question.id}-{i}",
            year=question.year,
            subject=question.subject,
            context=question.context,
            hypothesis=option.text,
            ground_truth=option.is_true,
        )
        for i, option in enumerate(question.options)
    ]


def split_for_year(year: int) -> str:
    if year in TRAIN_YEARS:
        return "train"
    if year in DEV_YEARS:
        return "dev"
    if year in TEST_YEARS:
        return "test"
    raise ValueError(f"year {year} outside {YEAR_MIN}..{YEAR_MAX}")


def split_by_year(instances: list[DataInstance]) -> list[DataInstance]:
    """Assign train/dev/test by exam year; the partition is total and disjoint."""
    for instance in instances:
        instance.split = split_for_year(instance.year)
    return instances


@dataclass(frozen=True)
class StrategyResponse:
    strategy: PromptStrategy
    response: ModelResponse
    prompt_hash: str
    params: GenerationParams


def generate_rationales(
    instance: DataInstance,
    strategies: list[PromptStrategy],
    retriever: Retriever | None,
    service: GenerationService,
    exemplar_pool: list[Exemplar] | None = None,
    exemplar_seed: int = 0,
    params: GenerationParams | None = None,
    k: int = 5,
    retry_cap: int = 2,
    locale: str = "en",
) -> list[StrategyResponse]:
    """One generation per strategy; service failures are recorded, not raised."""
    if instance.split not in ("train", "dev"):
        raise ValueError(
            f"rationales are generated for train/dev instances only, "
            f"got split {instance.split!r}"
        )
    params = params or GenerationParams()
    exemplar_pool = exemplar_pool or []
    results: list[StrategyResponse] = []
    for strategy in strategies:
        premises = None
        if strategy.uses_cikr:
            if retriever is None:
                raise ValueError(f"{strategy.label} requires a built index")
            premises = retriever.retrieve_premises(
                RetrievalQuery(instance.context, instance.hypothesis, k=k)
            )
            if instance.premises is None:
                instance.premises = premises
        exemplars = select_exemplars(exemplar_pool, strategy.shots, exemplar_seed)
        bundle = build_prompt(
            strategy,
            instance.context,
            instance.hypothesis,
            premises=premises,
            exemplars=exemplars,
            locale=locale,
        )
        try:
            response = assess_hypothesis(bundle, service, params, retry_cap=retry_cap)
        except TransportError as exc:
            response = ModelResponse(raw="", parse_status="unparseable", error=str(exc))
        results.append(
            StrategyResponse(
                strategy=strategy,
                response=response,
                prompt_hash=prompt_hash(bundle.rendered),
                params=params,
            )
        )
    return results


def filter_by_correctness(
    instance: DataInstance, responses: list[StrategyResponse]
) -> list[Rationale]:
    """Keep rationales whose predicted assessment equals the ground truth."""
    retained: list[Rationale] = []
    next_ordinal = len(instance.rationales)
    for item in responses:
        resp = item.response
        if resp.parse_status != "ok":
            continue
        if resp.assessment != instance.ground_truth:
            continue
        retained.append(
            replace(
                resp.rationale,
                rationale_type=item.strategy.rationale_type,
                rationale_id=f"{instance.id}:r{next_ordinal}",
            )
        )
        next_ordinal += 1
    return retained


def build_rationales(
    instances: list[DataInstance],
    strategies: list[PromptStrategy],
    retriever: Retriever | None,
    service: GenerationService,
    **kwargs,
) -> list[DataInstance]:
    """Generate, filter and attach rationales for every train/dev instance."""
    for instance in instances:
        if instance.split not in ("train", "dev"):
            continue
        responses = generate_rationales(
            instance, strategies, retriever, service, **kwargs
        )
        instance.rationales.extend(filter_by_correctness(instance, responses))
    return instances


def _annotation_id(instance_id: str, text: str) -> str:
    digest = hashlib.sha1(text.encode("utf-8")).hexdigest()[:10]
    return f"{instance_id}:dexp-{digest}"


def merge_expert_curation(
    instances: list[DataInstance], curation_path: str | Path
) -> list[DataInstance]:
    """Apply expert revisions and annotations; re-application is a no-op.

    Revisions replace a rationale's text, keeping the superseded text in its
    history. Annotations add DEXP-ANN rationales under content-derived ids.
    """
    entries = []
    with open(curation_path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            op = rec.get("op")
            if op not in ("revise", "annotate"):
                raise CurationError(f"line {line_no}: unknown op {op!r}")
            entries.append((line_no, rec))

    by_id = {instance.id: instance for instance in instances}
    unknown = sorted(
        {rec["instance_id"] for _, rec in entries if rec["instance_id"] not in by_id}
    )
    if unknown:
        raise CurationError(f"curation references unknown instance ids: {unknown}")

    for line_no, rec in entries:
        instance = by_id[rec["instance_id"]]
        if instance.split == "test":
            raise CurationError(
                f"line {line_no}: test-split instance {instance.id!r} "
                "cannot carry rationales"
            )
        text = rec["text"]
        if rec["op"] == "revise":
            target_id = rec["rationale_id"]
            idx = next(
                (
                    i
                    for i, r in enumerate(instance.rationales)
                    if r.rationale_id == target_id
                ),
                None,
            )
            if idx is None:
                raise CurationError(
                    f"line {line_no}: instance {instance.id!r} has no "
                    f"rationale {target_id!r}"
                )
            current = instance.rationales[idx]
            if current.text == text:
                continue
            instance.rationales[idx] = replace(
                current,
                text=text,
                cited_ref_nos=extract_ref_nos(text),
                history=current.history + (current.text,),
            )
        else:  # annotate
            rid = rec.get("rationale_id") or _annotation_id(instance.id, text)
            if any(r.rationale_id == rid for r in instance.rationales):
                continue
            instance.rationales.append(
                Rationale(
                    text=text,
                    cited_ref_nos=extract_ref_nos(text),
                    rationale_type="DEXP-ANN",
                    rationale_id=rid,
                )
            )
    return instances


def export_sft(
    instances: list[DataInstance],
    split: str,
    path: str | Path | None = None,
    locale: str = "en",
) -> list[dict]:
    """One {input, output} record per (instance, rationale) pair.

    Inputs are zero-shot CILR prompts over the instance's premises; outputs
    are the canonical assessment+rationale text. The test split is refused:
    its labels must never leak into training files.
    """
    if split not in ("train", "dev"):
        raise ValueError(f"SFT export is for train/dev only, got {split!r}")
    strategy = PromptStrategy.preset("CILR-ZS")
    records = []
    for instance in instances:
        if instance.split != split:
            continue
        premises = instance.premises if instance.premises is not None else PremiseSet()
        for rationale in instance.rationales:
            bundle = build_prompt(
                strategy,
                instance.context,
                instance.hypothesis,
                premises=premises,
                locale=locale,
            )
            records.append(
                {
                    "input": bundle.rendered,
                    "output": render_response(instance.ground_truth, rationale.text),
                    "instance_id": instance.id,
                    "rationale_id": rationale.rationale_id,
                    "rationale_type": rationale.rationale_type,
                }
            )
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            for rec in records:
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return records


@dataclass
class DatasetStats:
    """Instance and rationale counts on the (split, subject, type) grid."""

    instance_counts: Counter = field(default_factory=Counter)
    rationale_counts: Counter = field(default_factory=Counter)

    def instances(self, split: str | None = None, subject: str | None = None) -> int:
        return sum(
            n
            for (s, subj), n in self.instance_counts.items()
            if (split is None or s == split) and (subject is None or subj == subject)
        )

    def rationales(
        self,
        split: str | None = None,
        subject: str | None = None,
        rationale_type: str | None = None,
    ) -> int:
        return sum(
            n
            for (s, subj, rt), n in self.rationale_counts.items()
            if (split is None or s == split)
            and (subject is None or subj == subject)
            and (rationale_type is None or rt == rationale_type)
        )

    @property
    def rationale_types(self) -> list[str]:
        return sorted({rt for (_, _, rt) in self.rationale_counts})


def dataset_statistics(instances: list[DataInstance]) -> DatasetStats:
    stats = DatasetStats()
    for instance in instances:
        stats.instance_counts[(instance.split, instance.subject)] += 1
        for rationale in instance.rationales:
            stats.rationale_counts[
                (instance.split, instance.subject, rationale.rationale_type)
            ] += 1
    return stats


def render_stats_table(stats: DatasetStats) -> str:
    """Aligned text grid: per-subject rows, per-split instance and rationale counts."""
    header = ["subject"]
    for split in SPLITS:
        header.append(f"{split} inst")
    for split in ("train", "dev"):
        for rt in stats.rationale_types:
            if stats.rationales(split=split, rationale_type=rt):
                header.append(f"{split} {rt}")
    rows = [header]
    for subject in SUBJECTS:
        row = [subject]
        for split in SPLITS:
            row.append(str(stats.instances(split=split, subject=subject)))
        for split in ("train", "dev"):
            for rt in stats.rationale_types:
                if stats.rationales(split=split, rationale_type=rt):
                    row.append(
                        str(stats.rationales(split=split, subject=subject, rationale_type=rt))
                    )
        rows.append(row)
    total_row = ["all subjects"]
    for split in SPLITS:
        total_row.append(str(stats.instances(split=split)))
    for split in ("train", "dev"):
        for rt in stats.rationale_types:
            if stats.rationales(split=split, rationale_type=rt):
                total_row.append(str(stats.rationales(split=split, rationale_type=rt)))
    rows.append(total_row)

    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def check_split_invariants(instances: list[DataInstance]) -> None:
    """Raise when splits leak: duplicate ids, or test instances with extras."""
    seen: dict[str, str] = {}
    for instance in instances:
        if instance.split not in SPLITS:
            raise ValueError(f"instance {instance.id!r} has no split assigned")
        if instance.id in seen:
            raise ValueError(f"instance id {instance.id!r} appears more than once")
        seen[instance.id] = instance.split
        if instance.split == "test" and (instance.rationales or instance.premises):
            raise ValueError(
                f"test instance {instance.id!r} carries rationales or premises"
            )


def save_instances(instances: list[DataInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for instance in instances:
            f.write(json.dumps(instance.to_dict(), ensure_ascii=False) + "\n")


def load_instances(path: str | Path) -> list[DataInstance]:
    instances = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                instances.append(DataInstance.from_dict(json.loads(line)))
    return instances


def load_exam_questions(path: str | Path) -> list[ExamQuestion]:
    """Exam fixture format: {id, year, subject, context, options: [{text, is_true}]}."""
    questions = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            questions.append(
                ExamQuestion(
                    id=rec["id"],
                    year=rec["year"],
                    subject=rec["subject"],
                    context=rec.get("context", ""),
                    options=tuple(
                        ExamOption(text=o["text"], is_true=bool(o["is_true"]))
                        for o in rec["options"]
                    ),
                )
            )
    return questions


def dataset_hash(instances: list[DataInstance]) -> str:
    """Content hash over ids, labels and input texts; used in config echoes."""
    digest = hashlib.sha256()
    for instance in instances:
        digest.update(
            json.dumps(
                [instance.id, instance.ground_truth, instance.context, instance.hypothesis],
                ensure_ascii=False,
            ).encode("utf-8")
        )
    return digest.hexdigest()
