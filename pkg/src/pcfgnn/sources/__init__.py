"""
Providers of explicit cross-feature values for downstream models.
"""

from pcfgnn.sources.base import CrossFeatureSource, CrossQueries, NoneSource
from pcfgnn.sources.pcf import PcfSource
from pcfgnn.sources.sescf import (
    CostModel,
    MemoryReport,
    SescfSource,
    SescfTable,
    build_table,
    export_table_tsv,
    lookup,
    memory_report,
)

__all__ = [
    "CostModel",
    "CrossFeatureSource",
    "CrossQueries",
    "MemoryReport",
    "NoneSource",
    "PcfSource",
    "SescfSource",
    "SescfTable",
    "build_table",
    "export_table_tsv",
    "lookup",
    "memory_report",
]
