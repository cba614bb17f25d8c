"""Dynamic community detection on heterogeneous interaction networks.

Event logs of account interactions and shared URLs are turned into
PMI-weighted step networks over sliding windows, clustered by consensus over
repeated stochastic runs, and matched into community timelines.
"""

from .characterize import (
    ActivitySeries,
    RankingEntry,
    RankMode,
    activity_zscore,
    export_bundle,
    rank_members,
)
from .consensus import (
    ConsensusParams,
    ConsensusResult,
    StepCommunity,
    base_detect,
    consensus_communities,
    label_propagation,
)
from .events import (
    EntityKind,
    EntityRef,
    EventRecord,
    Resolver,
    StatsReport,
    classify_url,
    dataset_stats,
    load_resolver,
    parse_events,
    read_events,
)
from .network import (
    EdgeFilterParams,
    EdgeTag,
    StepNetwork,
    WindowSpec,
    activity_curve,
    build_step_network,
    make_windows,
    pmi_weight,
)
from .pipeline import PipelineConfig, run_pipeline
from .synth import GroundTruth, ScenarioConfig, evaluate_tracking, generate_scenario
from .tracking import (
    Timeline,
    TimelineSet,
    TrackingParams,
    advance_step,
    extract_persistent,
    representativeness,
    timeline_similarity,
)

__version__ = "0.1.0"
