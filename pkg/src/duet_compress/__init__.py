"""Dual-stage visual token compression with deterministic tensor I/O."""

from .budget import (
    BudgetReport,
    average_tokens,
    budget_records,
    flop_proxy,
    per_layer_counts,
    plan_entry_tokens,
)
from .errors import (
    ConfigError,
    EngineError,
    InternalError,
    MissingEntryError,
    TensorFormatError,
    UsageError,
)
from .prune import (
    PruneTrace,
    SalientSelector,
    StageState,
    drop_stage,
    parse_selector,
    run_prune,
    select_salient,
    t2v_scores,
    trace_entries,
)
from .schedule import (
    DropSchedule,
    format_schedule,
    parse_schedule,
    retained_count,
    retained_counts,
)
from .sim import (
    PipelineTrace,
    Prng,
    SimConfig,
    SweepRow,
    SweepSpec,
    generate,
    pipeline_entries,
    run_pipeline,
    run_sweep,
)
from .tensorio import (
    archive_get,
    load_archive,
    read_archive,
    read_tensor,
    save_archive,
    write_archive,
    write_tensor,
)
from .vision import (
    CompressionConfig,
    CompressionResult,
    attention_scores,
    cluster_neighbors,
    compress_from_archive,
    compress_vision,
    merge_cluster,
    result_entries,
    top_k,
)

__version__ = "0.1.0"
