"""Deterministic tactical-link network simulator and RL congestion-control
framework: dumbbell topology with timed link transitions, scripted background
traffic, a SACK-based reliable transport with an externally driven congestion
window, baseline controllers, metrics, and a batch evaluation harness."""

from .baselines import (
    CubicController,
    CubicState,
    fixed_cwnd_policy,
    ideal_fair_time,
    random_policy,
)
from .env import (
    Action,
    CongestionControlEnv,
    EnvConfig,
    RewardInputs,
    StepResult,
    apply_action,
    compute_reward,
    compute_target,
)
from .features import MovingNormalizer, feature_stats
from .metrics import (
    EpisodeReport,
    RtiInputs,
    aggregate,
    compute_rti,
    split_rtt_by_link,
)
from .presets import desk_scenario, get_scenario, satcom_uhf_scenario
from .scenario import Scenario, load_scenario, scenario_from_dict
from .sim import (
    LinkProfile,
    Packet,
    Simulator,
    Topology,
    TransitionSchedule,
    apply_transition,
    build_dumbbell,
    substream,
)
from .traffic import (
    BurstSpec,
    TrafficPattern,
    TrafficScript,
    generate_events,
    offered_load,
    parse_script,
    serialize_script,
)
from .transport import (
    FEATURES,
    Receiver,
    Sender,
    StatSnapshot,
    TransportConfig,
    open_connection,
)

__version__ = "0.1.0"
