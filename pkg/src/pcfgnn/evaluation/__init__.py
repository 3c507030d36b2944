"""
Metrics, synthetic benchmark data and experiment runners.
"""

from pcfgnn.evaluation.experiments import (
    DEFAULT_ABLATION,
    AblationResult,
    AblationRow,
    BenchmarkResult,
    EdgeFitResult,
    ablation_frame,
    compare_sources,
    edge_fit,
    format_report_text,
    reports_frame,
    run_ablation,
    run_benchmark,
    write_report_tsv,
)
from pcfgnn.evaluation.metrics import (
    EvalReport,
    auc,
    evaluate,
    hit_rate,
    new_mask,
    query_hit_rate,
    split_new_org,
)
from pcfgnn.evaluation.synthetic import SyntheticData, SyntheticSpec, generate_synthetic

__all__ = [
    "DEFAULT_ABLATION",
    "AblationResult",
    "AblationRow",
    "BenchmarkResult",
    "EdgeFitResult",
    "EvalReport",
    "SyntheticData",
    "SyntheticSpec",
    "ablation_frame",
    "compare_sources",
    "auc",
    "edge_fit",
    "evaluate",
    "format_report_text",
    "generate_synthetic",
    "hit_rate",
    "new_mask",
    "query_hit_rate",
    "reports_frame",
    "run_ablation",
    "run_benchmark",
    "split_new_org",
    "write_report_tsv",
]
