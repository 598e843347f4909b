"""Assistant-mediated multi-robot control simulator with HRI metrics."""

from .broker import Broker, Message, TopicFilter, match
from .metrics import (
    MetricsReport,
    TaskSpec,
    TlxResponse,
    TrustLevel,
    anova_one_way,
    build_report,
    compute_fo,
    compute_rad,
    load_tlx_responses,
    segment,
    tlx_score,
    trust_adjusted_rad,
)
from .runner import RunReport, export_report, replay_frames, replay_log, run
from .scenario import Scenario, load_scenario
from .shadow import ShadowDocument, ShadowStore, StatePatch, compute_delta

__version__ = "0.1.0"

__all__ = [
    "Broker",
    "Message",
    "MetricsReport",
    "RunReport",
    "Scenario",
    "ShadowDocument",
    "ShadowStore",
    "StatePatch",
    "TaskSpec",
    "TlxResponse",
    "TopicFilter",
    "TrustLevel",
    "anova_one_way",
    "build_report",
    "compute_delta",
    "compute_fo",
    "compute_rad",
    "export_report",
    "load_scenario",
    "load_tlx_responses",
    "match",
    "replay_frames",
    "replay_log",
    "run",
    "segment",
    "tlx_score",
    "trust_adjusted_rad",
]
