"""Built-in scenarios: the SATCOM-to-UHF handover study and a desk-scale
single-link variant for quick training runs."""

from __future__ import annotations

from pathlib import Path

from .scenario import Scenario, load_scenario
from .sim import LinkProfile, build_dumbbell
from .traffic import TrafficScript, parse_script

SATCOM = LinkProfile(
    rate_bps=1_000_000, one_way_delay_ms=500.0, loss_prob=0.0,
    queue_capacity_bytes=125_000,
)
UHF = LinkProfile(
    rate_bps=256_000, one_way_delay_ms=125.0, loss_prob=0.03,
    queue_capacity_bytes=8_000,
)

# Two elephants at 40% of the bottleneck rate alternating every 2 s, two
# continuous mice flows; the heavy UDP elephants stop once traffic rides UHF.
SATCOM_PATTERN = """
0.0 2.0 eleph1 ELEPHANT nonadaptive 400000
4.0 6.0 eleph1 ELEPHANT nonadaptive 400000
2.0 4.0 eleph2 ELEPHANT nonadaptive 400000
6.0 8.0 eleph2 ELEPHANT nonadaptive 400000
0.0 8.0 mice1 MICE nonadaptive 0.5 1500
0.0 8.0 mice2 MICE nonadaptive 0.5 1500
"""

UHF_PATTERN = """
0.0 8.0 mice1 MICE nonadaptive 0.5 1500
0.0 8.0 mice2 MICE nonadaptive 0.5 1500
"""

# Long-RTT radio link with a shallow buffer: the link BDP (16 KB) is well
# above what the residual capacity sustains, so a window matched to raw link
# bandwidth overflows the queue while an adaptive sender need not.
DESK_LINK = LinkProfile(
    rate_bps=256_000, one_way_delay_ms=250.0, loss_prob=0.03,
    queue_capacity_bytes=4_000,
)

DESK_PATTERN = """
0.0 2.0 eleph1 ELEPHANT nonadaptive 128000
4.0 6.0 eleph1 ELEPHANT nonadaptive 128000
0.0 8.0 mice1 MICE nonadaptive 0.5 1500
"""


def satcom_uhf_scenario(seed: int = 1) -> Scenario:
    """Dumbbell with a SATCOM bottleneck handing over to UHF at 10 s."""
    return Scenario(
        name="satcom-uhf",
        profiles={"satcom": SATCOM, "uhf": UHF},
        topology=build_dumbbell(
            ["sender", "traffic_src"], ["receiver", "traffic_sink"]
        ),
        transitions=((0.0, "satcom"), (10.0, "uhf")),
        traffic=TrafficScript(
            patterns={
                "satcom": parse_script(SATCOM_PATTERN),
                "uhf": parse_script(UHF_PATTERN),
            },
        ),
        seed=seed,
    )


def desk_scenario(seed: int = 1) -> Scenario:
    """Single lossy radio link with intermittent background contention."""
    return Scenario(
        name="desk",
        profiles={"uhf": DESK_LINK},
        topology=build_dumbbell(
            ["sender", "traffic_src"], ["receiver", "traffic_sink"]
        ),
        transitions=((0.0, "uhf"),),
        traffic=TrafficScript(patterns={"uhf": parse_script(DESK_PATTERN)}),
        seed=seed,
    )


PRESETS = {
    "satcom-uhf": satcom_uhf_scenario,
    "desk": desk_scenario,
}


def get_scenario(name_or_path: str, seed: int | None = None) -> Scenario:
    """Resolve a preset name or a scenario file path."""
    if name_or_path in PRESETS:
        scenario = PRESETS[name_or_path]()
    else:
        scenario = load_scenario(Path(name_or_path))
    if seed is not None:
        scenario = scenario.with_seed(seed)
    return scenario
