"""lapis: crime-investigation legal reasoning scaffold.

Knowledgebase ingestion, dense retrieval, prompt construction, hypothesis
assessment over a pluggable generation service, dataset construction, an
ACC/F1 evaluation harness, and an investigation session service.
"""

__version__ = "0.1.0"

from .knowledgebase import (
    CorpusFormatError,
    KnowledgeBase,
    Paragraph,
    SourceDocument,
    chunk_document,
    corpus_statistics,
    ingest_corpus,
)
from .index import (
    EmbeddingCache,
    EmbeddingVector,
    HashingEmbeddingProvider,
    VectorIndex,
    build_index,
    embed,
    search_top_k,
)
from .retriever import (
    Premise,
    PremiseSet,
    RetrievalQuery,
    Retriever,
    format_premises,
)
from .prompting import (
    Exemplar,
    PromptBundle,
    PromptStrategy,
    build_prompt,
    load_exemplar_pool,
    preset_strategies,
    select_exemplars,
)
from .evaluator import (
    GenerationParams,
    ModelResponse,
    Rationale,
    ScriptedMockService,
    TransportError,
    assess_hypothesis,
    parse_response,
    render_response,
)
from .dataset import (
    DataInstance,
    ExamOption,
    ExamQuestion,
    dataset_statistics,
    explode_mcq,
    export_sft,
    filter_by_correctness,
    generate_rationales,
    merge_expert_curation,
    split_by_year,
)
from .harness import (
    ConfusionCounts,
    EvalConfig,
    EvalReport,
    ablation_matrix,
    render_comparison_table,
    render_report,
    run_evaluation,
    score,
)
from .session import (
    InvestigationSession,
    SessionService,
    SessionStore,
    TimelineStep,
)
