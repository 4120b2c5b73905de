"""Shared test fixtures: the investigation scenario, synthetic exams, mocks."""

from __future__ import annotations

import re
from random import Random

from lapis.dataset import SUBJECTS, ExamOption, ExamQuestion
from lapis.evaluator import GenerationParams, render_response
from lapis.prompting import (
    PromptBundle,
    PromptStrategy,
    build_prompt,
    load_exemplar_pool,
    select_exemplars,
)
from lapis.retriever import Premise, PremiseSet

# Three-step investigation scenario used by retriever, session and acceptance
# tests. Step T1 reconstructs a stabbing case whose precedents live in the
# fixture corpus.

T1_CONTEXT = (
    "A witness reported that the perpetrator stabbed the victim with a knife "
    "after a quarrel, and the victim died from excessive bleeding. The autopsy "
    "report states the wound was 6cm long and 17cm deep, cutting through the "
    "left pericardium of the heart."
)
T1_HYPOTHESIS = "Murder intent can be recognized in this case."

T2_CONTEXT = (
    "A witness contacted the police claiming they can describe the "
    "perpetrator's appearance in detail."
)
T2_HYPOTHESIS = (
    "Obtaining only the key details of the witness's description is enough to "
    "identify the perpetrator and close the case sooner."
)

T3_CONTEXT = (
    "The identified suspect came to the police station voluntarily. After "
    "provocative questions the suspect refuses to answer and decides to leave."
)
T3_HYPOTHESIS = (
    "It is legal to perform coercive measures to prevent the suspect from "
    "leaving the police station."
)

SCENARIO_STEPS = [
    (T1_CONTEXT, T1_HYPOTHESIS, True, "The depth and location of the wound show the act was intentional, as held in ruling (Ref No: 89do2087)."),
    (T2_CONTEXT, T2_HYPOTHESIS, False, "Testimony should be obtained as detailed as possible; narrowing to key details risks losing decisive clues (textbook)."),
    (T3_CONTEXT, T3_HYPOTHESIS, False, "Coercive measures against a voluntary attendee are lawful only during violent behavior, per ruling (Ref No: 91do1314)."),
]


_STATEMENT_RE = re.compile(r"Statement ([\w-]+): the investigative action")


GOLDEN_PREMISES = PremiseSet(
    (
        Premise(
            "ruling-89do2087::0000",
            "court_ruling",
            "89do2087",
            "A deep stab wound to the heart shows intent to kill.",
            0.91,
            1,
        ),
        Premise(
            "textbook-witness-detail::0000",
            "textbook",
            None,
            "Witness statements must be taken in full detail.",
            0.84,
            2,
        ),
        Premise(
            "law-homicide::0000",
            "law_article",
            None,
            "Unlawful killing carries the gravest punishment.",
            0.77,
            3,
        ),
    )
)


def golden_bundle(preset_name: str) -> PromptBundle:
    """The canonical bundle each golden file was rendered from."""
    strategy = PromptStrategy.preset(preset_name)
    pool = load_exemplar_pool()
    return build_prompt(
        strategy,
        T1_CONTEXT,
        T1_HYPOTHESIS,
        premises=GOLDEN_PREMISES if strategy.uses_cikr else None,
        exemplars=select_exemplars(pool, strategy.shots, seed=7),
    )


def script_scenario_responses(mock, retriever, k: int = 5) -> None:
    """Register canned responses for every step of the T1-T3 scenario.

    Prompts are reproduced exactly as the session service will build them:
    cumulative context, retrieved premises, zero-shot structured prompt.
    """
    from lapis.retriever import RetrievalQuery

    deltas = []
    strategy = PromptStrategy.preset("CILR-ZS")
    for delta, hypothesis, expected, rationale in SCENARIO_STEPS:
        deltas.append(delta)
        cumulative = "\n\n".join(deltas)
        premises = retriever.retrieve_premises(
            RetrievalQuery(cumulative, hypothesis, k=k)
        )
        bundle = build_prompt(strategy, cumulative, hypothesis, premises=premises)
        mock.add(bundle.rendered, render_response(expected, rationale))


def synthetic_questions(
    n_questions: int = 30, seed: int = 11, years: list[int] | None = None
) -> list[ExamQuestion]:
    """Deterministic exam fixture spanning all subjects and years."""
    rng = Random(seed)
    years = years or list(range(2013, 2024))
    questions = []
    for i in range(n_questions):
        qid = f"q{i:03d}"
        year = years[i % len(years)]
        subject = SUBJECTS[i % len(SUBJECTS)]
        n_options = rng.choice([2, 3, 4, 5])
        options = tuple(
            ExamOption(
                text=(
                    f"Statement {qid}-{j}: the investigative action described "
                    f"in scenario {i} is lawful."
                ),
                is_true=rng.random() < 0.5,
            )
            for j in range(n_options)
        )
        context = f"Scenario {i}: officers respond to incident number {i * 7}."
        if i % 5 == 0:
            context = ""
        questions.append(
            ExamQuestion(id=qid, year=year, subject=subject, context=context, options=options)
        )
    return questions


def make_test_instances(labels: list[bool], split: str = "test", years=(2021, 2022, 2023)):
    """Tagged instances whose hypothesis carries the id the rule mock reads."""
    from lapis.dataset import DataInstance

    out = []
    for i, truth in enumerate(labels):
        out.append(
            DataInstance(
                id=f"i{i:03d}",
                year=years[i % len(years)],
                subject=SUBJECTS[i % len(SUBJECTS)],
                context=f"Scenario {i}.",
                hypothesis=(
                    f"Statement i{i:03d}: the investigative action described "
                    f"in scenario {i} is lawful."
                ),
                ground_truth=truth,
                split=split,
            )
        )
    return out


def paper_shaped_report(retriever):
    """Run 100 instances into confusion tp=50 fp=13 tn=24 fn=13 (ACC .74, F1 .79)."""
    from lapis.harness import EvalConfig, run_evaluation

    instances = make_test_instances([True] * 63 + [False] * 37)
    truth = {i.id: i.ground_truth for i in instances}
    wrong_true = [i.id for i in instances if i.ground_truth][:13]
    wrong_false = [i.id for i in instances if not i.ground_truth][:13]
    service = RuleBasedMockService(truth, wrong_ids=set(wrong_true + wrong_false))
    config = EvalConfig(model_id="scripted", strategy=PromptStrategy.preset("CILR-ZS"))
    return run_evaluation(config, instances, service, retriever)


def save_questions(questions: list[ExamQuestion], path) -> None:
    """Write exam questions in the CLI's fixture format."""
    import json

    with open(path, "w", encoding="utf-8") as f:
        for q in questions:
            f.write(
                json.dumps(
                    {
                        "id": q.id,
                        "year": q.year,
                        "subject": q.subject,
                        "context": q.context,
                        "options": [
                            {"text": o.text, "is_true": o.is_true} for o in q.options
                        ],
                    }
                )
                + "\n"
            )


class RuleBasedMockService:
    """Deterministic generation double that reads the instance tag out of the
    prompt and answers from a truth table; optionally wrong or malformed for
    chosen instances."""

    def __init__(
        self,
        truth: dict[str, bool],
        wrong_ids: set[str] | None = None,
        unparseable_ids: set[str] | None = None,
        service_id: str = "rule-mock",
    ):
        self.truth = truth
        self.wrong_ids = wrong_ids or set()
        self.unparseable_ids = unparseable_ids or set()
        self.service_id = service_id
        self.call_count = 0

    def generate(self, prompt: str, params: GenerationParams) -> str:
        self.call_count += 1
        matches = _STATEMENT_RE.findall(prompt)
        if not matches:
            raise LookupError("prompt carries no instance tag")
        instance_id = matches[-1]  # exemplars may precede the live question
        if instance_id in self.unparseable_ids:
            return "I cannot commit to a judgement here."
        answer = self.truth[instance_id]
        if instance_id in self.wrong_ids:
            answer = not answer
        return render_response(answer, f"Scripted reasoning for {instance_id}.")
