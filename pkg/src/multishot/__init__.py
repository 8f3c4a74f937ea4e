"""Shot-windowed attention, data curation, and scoring for multi-shot video.

Core pieces:

- token layouts and per-shot summary-token strategies (:mod:`.layout`)
- dense reference attention with boolean masking (:mod:`.attention`)
- prompt-windowed cross-attention (:mod:`.window`)
- sparse inter-shot self-attention plans, packed varlen execution, and
  exact FLOP counters (:mod:`.sparse`)
- cut detection, shot filtering, duration-tier assembly, and the
  hierarchical shot-cut prompt format (:mod:`.curation`)
- shot cut accuracy and embedding consistency metrics (:mod:`.metrics`)
- scaling benchmarks and oracle verification (:mod:`.bench`)
"""

from .attention import dense_attention, dense_flops, masked_dense_attention, stable_softmax
from .bench import (
    BENCH_CSV_COLUMNS,
    BenchConfig,
    BenchRow,
    CheckResult,
    FaultResult,
    VerifyReport,
    bench_scaling,
    verify_equivalence,
    write_bench_csv,
)
from .curation import (
    DEFAULT_DURATION_TIERS_S,
    DEFAULT_MAX_SHOTS,
    DEFAULT_TOLERANCE_FRACTION,
    SHOT_CUT_DELIMITER,
    SHOT_CUT_TAG,
    CurationSample,
    FilterPolicy,
    HierarchicalPrompt,
    RejectReason,
    SourceShot,
    assemble_samples,
    detect_cuts,
    filter_shots,
    parse_hierarchical_prompt,
    read_frame_signal,
    read_shot_manifest,
    render_hierarchical_prompt,
    sample_record,
    shot_from_record,
    shot_record,
    write_samples,
    write_shot_manifest,
)
from .errors import (
    ConfigTooLargeError,
    DegenerateGroupError,
    DelimiterCollisionError,
    EmptyAttentionRowError,
    EmptyInputError,
    EmptyLayoutError,
    FrameCountMismatchError,
    IndexOutOfBoundsError,
    InvalidShotSpecError,
    InvalidSummaryIndexError,
    LayoutMismatchError,
    MalformedPromptError,
    MultishotError,
    NonFiniteInputError,
    PlanLayoutMismatchError,
    ShapeMismatchError,
    TooFewFramesError,
    UnrepresentableAsMaskError,
)
from .layout import (
    ExplicitIndices,
    FirstAndLastFrame,
    FirstFrame,
    ShotSpec,
    SummaryStrategy,
    TokenLayout,
    build_token_layout,
    summary_token_indices,
)
from .metrics import (
    CutList,
    EmbeddingProvider,
    HashEmbeddingProvider,
    MatchResult,
    ScaReport,
    TableEmbeddingProvider,
    default_penalty,
    inter_shot_consistency,
    intra_shot_consistency,
    load_embeddings,
    match_cuts,
    read_cut_list,
    semantic_consistency,
    semantic_consistency_per_shot,
    shot_cut_accuracy,
    write_cut_list,
)
from .sparse import (
    FlopReport,
    PlanMode,
    SparsePlan,
    build_sparse_plan,
    pack_varlen,
    plan_manifest,
    plan_to_dense_mask,
    sparse_flops,
    sparse_self_attention,
)
from .window import (
    PromptLayout,
    build_cross_mask,
    prompt_layout_from_counts,
    window_cross_attention,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
