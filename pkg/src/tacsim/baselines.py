"""Comparison policies: CUBIC-style loss-based control, the fixed-window
link-matched oracle, a random agent, and the analytic ideal-fair transfer time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .scenario import Scenario, residual_rate_segments
from .transport import Sender

POLICY_NAMES = ("cubic", "fixed", "random", "marlin", "ideal")


class BaselineError(Exception):
    pass


@dataclass
class CubicState:
    c_scale: float = 0.4            # segments / s^3
    beta: float = 0.7
    w_max_bytes: float = 0.0
    epoch_start_s: Optional[float] = None
    k_s: float = 0.0
    ssthresh_bytes: float = math.inf
    in_slow_start: bool = True
    last_reduction_s: Optional[float] = None


class CubicController:
    """Loss-based window growth: slow start, then the cubic law around w_max.

    Loss events within one smoothed RTT coalesce into a single reduction;
    a timeout additionally falls back to slow start from two segments.
    """

    def __init__(self, conn: Sender, c_scale: float = 0.4, beta: float = 0.7):
        self.conn = conn
        self.state = CubicState(c_scale=c_scale, beta=beta)
        self.segment = conn.config.segment_bytes
        conn.set_cwnd(2 * self.segment)
        conn.ack_listeners.append(self.on_ack)
        conn.loss_listeners.append(self.on_loss)

    def _k_from_wmax(self, w_max_bytes: float) -> float:
        w_max_seg = w_max_bytes / self.segment
        return ((w_max_seg * (1.0 - self.state.beta)) / self.state.c_scale) ** (1.0 / 3.0)

    def _start_epoch(self, now_s: float):
        self.state.epoch_start_s = now_s
        self.state.k_s = self._k_from_wmax(self.state.w_max_bytes)

    def on_ack(self, newly_bytes: int, now_s: float):
        if newly_bytes <= 0:
            return
        st = self.state
        if st.in_slow_start:
            new_cwnd = self.conn.cwnd_bytes + newly_bytes
            if new_cwnd >= st.ssthresh_bytes:
                st.in_slow_start = False
                self._start_epoch(now_s)
                self.conn.set_cwnd(int(st.ssthresh_bytes))
            else:
                self.conn.set_cwnd(new_cwnd)
            return
        if st.epoch_start_s is None:
            self._start_epoch(now_s)
        t = now_s - st.epoch_start_s
        w_seg = st.c_scale * (t - st.k_s) ** 3 + st.w_max_bytes / self.segment
        self.conn.set_cwnd(int(round(w_seg * self.segment)))

    def on_loss(self, kind: str, now_s: float):
        st = self.state
        srtt_s = (self.conn.srtt_ms or 1000.0) / 1000.0
        if st.last_reduction_s is not None and now_s - st.last_reduction_s < srtt_s:
            return  # coalesce losses within one round trip
        st.last_reduction_s = now_s
        st.w_max_bytes = float(self.conn.cwnd_bytes)
        reduced = st.beta * self.conn.cwnd_bytes
        st.ssthresh_bytes = max(reduced, 2 * self.segment)
        if kind == "timeout":
            st.in_slow_start = True
            st.epoch_start_s = None
            self.conn.set_cwnd(2 * self.segment)
        else:
            st.in_slow_start = False
            self.conn.set_cwnd(int(round(reduced)))
            self._start_epoch(now_s)


def fixed_cwnd_policy(scenario: Scenario, now_s: float) -> int:
    """Bandwidth-matched oracle window: BDP of the profile active at `now`."""
    profile = scenario.profile_at(now_s)
    return int(round(profile.rate_bps / 8.0 * profile.nominal_rtt_ms / 1000.0))


def random_policy(rng) -> float:
    """Uniform gain in [-1, 1]."""
    return float(rng.uniform(-1.0, 1.0))


def ideal_fair_time(
    scenario: Scenario,
    payload_bytes: int,
    n_adaptive_flows: Optional[int] = None,
) -> float:
    """Completion time of a perfectly fair transfer, plus one setup RTT.

    The fair sender receives max(0, rate - nonadaptive load) / n at every
    instant and never inflates RTT.  Returns math.inf when the residual
    capacity is identically zero (the transfer never completes).
    """
    if payload_bytes <= 0:
        raise BaselineError("payload_bytes must be > 0")
    n = n_adaptive_flows if n_adaptive_flows is not None else scenario.n_adaptive_flows()
    if n < 1:
        raise BaselineError("n_adaptive_flows must be >= 1")
    setup_s = scenario.profiles[scenario.transitions[0][1]].nominal_rtt_ms / 1000.0
    need_bits = payload_bytes * 8.0

    last_phase_start, last_profile = scenario.transitions[-1]
    pattern = (
        scenario.traffic.pattern_for(last_profile)
        if scenario.traffic is not None
        else None
    )
    period = pattern.period_s if pattern is not None and pattern.events else 1.0
    probe_end = last_phase_start + period

    acc = 0.0
    for t0, t1, residual in residual_rate_segments(scenario, 0.0, probe_end):
        share = max(residual, 0.0) / n
        if share > 0 and acc + share * (t1 - t0) >= need_bits:
            return t0 + (need_bits - acc) / share + setup_s
        acc += share * (t1 - t0)

    per_period = sum(
        max(res, 0.0) / n * (t1 - t0)
        for t0, t1, res in residual_rate_segments(
            scenario, probe_end - period, probe_end
        )
    )
    if per_period <= 0.0:
        return math.inf
    full_periods = int((need_bits - acc) // per_period)
    acc += full_periods * per_period
    t_base = probe_end + full_periods * period
    offset = probe_end - period  # same phase position as t_base
    for t0, t1, residual in residual_rate_segments(scenario, offset, offset + period):
        share = max(residual, 0.0) / n
        if share > 0 and acc + share * (t1 - t0) >= need_bits:
            return (t0 - offset) + t_base + (need_bits - acc) / share + setup_s
        acc += share * (t1 - t0)
    # only reachable through floating-point shortfall at a period boundary
    return t_base + period + setup_s
