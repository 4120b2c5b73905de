"""Prompt construction for the six assessment strategies.

Three methods (vanilla, IRAC, CILR) crossed with shot counts give the six
presets; only CILR presets carry a retrieved premise block. Templates are
plain text files per (method, locale) so prompt language is data, not code.
Every rendering ends with the fixed answer-format directive that the response
parser relies on.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from random import Random

from .retriever import PremiseSet, format_premises

METHODS = ("VP", "IRAC", "CILR")
SHOT_COUNTS = (0, 1, 3)

# the six paper presets: (method, shots, uses_cikr)
PRESET_COMBOS = {
    "VP-ZS": ("VP", 0, False),
    "IRAC-ZS": ("IRAC", 0, False),
    "IRAC-1S": ("IRAC", 1, False),
    "CILR-ZS": ("CILR", 0, True),
    "CILR-1S": ("CILR", 1, True),
    "CILR-3S": ("CILR", 3, True),
}

DEFAULT_LOCALE = "en"

EXEMPLAR_POOL_VERSION = "v1"

_TEMPLATE_DIR = Path(__file__).parent / "templates"
_DATA_DIR = Path(__file__).parent / "data"

_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")


@dataclass(frozen=True)
class PromptStrategy:
    method: str
    shots: int
    uses_cikr: bool
    ablation: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.shots not in SHOT_COUNTS:
            raise ValueError(f"shots must be one of {SHOT_COUNTS}")
        if not self.ablation:
            combo = (self.method, self.shots, self.uses_cikr)
            if combo not in PRESET_COMBOS.values():
                raise ValueError(
                    f"{combo} is not a preset strategy; pass ablation=True "
                    "to build non-preset combinations"
                )

    @classmethod
    def preset(cls, name: str) -> "PromptStrategy":
        try:
            method, shots, uses_cikr = PRESET_COMBOS[name]
        except KeyError:
            raise ValueError(
                f"unknown preset {name!r}; expected one of {sorted(PRESET_COMBOS)}"
            ) from None
        return cls(method=method, shots=shots, uses_cikr=uses_cikr)

    @property
    def label(self) -> str:
        return f"{self.method}-{'ZS' if self.shots == 0 else f'{self.shots}S'}"

    @property
    def rationale_type(self) -> str:
        return f"GPT4-{self.label}"


def preset_strategies() -> list[PromptStrategy]:
    """All six presets, in dataset column order."""
    return [PromptStrategy.preset(name) for name in PRESET_COMBOS]


@dataclass(frozen=True)
class Exemplar:
    context: str
    hypothesis: str
    assessment: bool
    rationale: str
    premise_block: str | None = None

    def __post_init__(self):
        if not self.rationale or not self.rationale.strip():
            raise ValueError("exemplar rationale must be non-empty")
        if not self.hypothesis or not self.hypothesis.strip():
            raise ValueError("exemplar hypothesis must be non-empty")


@dataclass(frozen=True)
class PromptBundle:
    strategy: PromptStrategy
    system_instruction: str
    exemplars: tuple[Exemplar, ...]
    context: str
    hypothesis: str
    premise_block: str | None
    rendered: str


@lru_cache(maxsize=None)
def _load_template(name: str, locale: str) -> str:
    path = _TEMPLATE_DIR / locale / f"{name}.txt"
    if not path.exists():
        raise FileNotFoundError(f"no template {name!r} for locale {locale!r}")
    return path.read_text(encoding="utf-8")


def _fill(template: str, mapping: dict[str, str]) -> str:
    # single-pass substitution: values are never re-scanned for placeholders
    return _PLACEHOLDER_RE.sub(lambda m: mapping.get(m.group(1), m.group(0)), template)


def _render_exemplar(
    exemplar: Exemplar, include_premises: bool, locale: str
) -> str:
    premise_section = ""
    if include_premises and exemplar.premise_block:
        premise_section = f"Premise:\n{exemplar.premise_block}\n"
    context_block = f"Context: {exemplar.context}\n" if exemplar.context.strip() else ""
    return _fill(
        _load_template("exemplar", locale),
        {
            "premise_section": premise_section,
            "context_block": context_block,
            "hypothesis": exemplar.hypothesis,
            "assessment": "True" if exemplar.assessment else "False",
            "rationale": exemplar.rationale,
        },
    ).strip("\n")


def build_prompt(
    strategy: PromptStrategy,
    context: str,
    hypothesis: str,
    premises: PremiseSet | None = None,
    exemplars: tuple[Exemplar, ...] | list[Exemplar] = (),
    locale: str = DEFAULT_LOCALE,
) -> PromptBundle:
    """Render the prompt for one strategy. Pure: same inputs, same text."""
    if not hypothesis or not hypothesis.strip():
        raise ValueError("hypothesis must be non-empty")
    exemplars = tuple(exemplars)
    if len(exemplars) != strategy.shots:
        raise ValueError(
            f"{strategy.label} needs {strategy.shots} exemplars, got {len(exemplars)}"
        )
    if strategy.uses_cikr and premises is None:
        raise ValueError(f"{strategy.label} uses CIKR and requires premises")
    if not strategy.uses_cikr and premises is not None:
        raise ValueError(f"{strategy.label} does not use CIKR; premises not allowed")

    template = _load_template(strategy.method.lower(), locale)
    directive = _load_template("directive", locale).strip("\n")

    rendered_exemplars = [
        _render_exemplar(e, include_premises=strategy.uses_cikr, locale=locale)
        for e in exemplars
    ]
    exemplar_block = (
        "\n\n".join(rendered_exemplars) + "\n\n" if rendered_exemplars else ""
    )
    context_block = f"Context: {context}\n\n" if context.strip() else ""
    premise_block = format_premises(premises) if strategy.uses_cikr else None

    rendered = _fill(
        template,
        {
            "exemplar_block": exemplar_block,
            "premise_block": premise_block or "",
            "context_block": context_block,
            "hypothesis": hypothesis,
            "directive": directive,
        },
    )

    system_instruction = template.split("{exemplar_block}")[0].strip()

    return PromptBundle(
        strategy=strategy,
        system_instruction=system_instruction,
        exemplars=exemplars,
        context=context,
        hypothesis=hypothesis,
        premise_block=premise_block,
        rendered=rendered,
    )


def select_exemplars(
    pool: list[Exemplar] | tuple[Exemplar, ...], n: int, seed: int
) -> list[Exemplar]:
    """Deterministic exemplar pick; keeps both labels present when n >= 2.

    Balance is best-effort: a single-label pool cannot supply both labels.
    """
    if n == 0:
        return []
    if len(pool) < n:
        raise ValueError(f"exemplar pool has {len(pool)} entries, need {n}")
    order = list(range(len(pool)))
    Random(seed).shuffle(order)
    picked = order[:n]

    if n >= 2:
        labels = {pool[i].assessment for i in picked}
        pool_labels = {e.assessment for e in pool}
        if len(labels) == 1 and len(pool_labels) == 2:
            missing = not next(iter(labels))
            for i in order[n:]:
                if pool[i].assessment == missing:
                    picked[-1] = i
                    break
    return [pool[i] for i in picked]


def load_exemplar_pool(path: str | Path | None = None) -> list[Exemplar]:
    """Load the versioned exemplar file shipped with the package (or a custom one)."""
    if path is None:
        path = _DATA_DIR / f"exemplars_{EXEMPLAR_POOL_VERSION}.jsonl"
    pool = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            pool.append(
                Exemplar(
                    context=rec.get("context", ""),
                    hypothesis=rec["hypothesis"],
                    assessment=bool(rec["assessment"]),
                    rationale=rec["rationale"],
                    premise_block=rec.get("premise_block"),
                )
            )
    return pool
