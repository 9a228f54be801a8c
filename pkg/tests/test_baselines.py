import math

import pytest

from tacsim.baselines import (
    BaselineError,
    CubicController,
    fixed_cwnd_policy,
    ideal_fair_time,
    random_policy,
)
from tacsim.presets import satcom_uhf_scenario
from tacsim.scenario import Scenario
from tacsim.sim import (
    LinkProfile,
    Simulator,
    TransitionSchedule,
    build_dumbbell,
    substream,
)
from tacsim.traffic import TrafficScript, parse_script
from tacsim.transport import Sender

SATCOM = LinkProfile(1_000_000, 500.0, 0.0, 125_000)


def make_conn():
    sim = Simulator(seed=0)
    sim.configure_dumbbell(
        build_dumbbell(["sender"], ["receiver"]),
        TransitionSchedule(((0.0, SATCOM),)),
    )
    return sim, Sender(sim, "f", "sender", "receiver")


def plain_scenario(traffic_text=None, rate=1_000_000, period=8.0):
    traffic = None
    if traffic_text is not None:
        traffic = TrafficScript(
            patterns={"p": parse_script(traffic_text, period_s=period)},
            period_s=period,
        )
    return Scenario(
        name="t",
        profiles={"p": LinkProfile(rate, 500.0, 0.0, 125_000)},
        topology=build_dumbbell(["sender", "traffic_src"], ["receiver", "traffic_sink"]),
        transitions=((0.0, "p"),),
        traffic=traffic,
    )


class TestCubic:
    def test_slow_start_doubles_per_rtt(self):
        sim, conn = make_conn()
        cubic = CubicController(conn)
        assert conn.cwnd_bytes == 2_000
        for _ in range(3):  # one "round trip" acks a full window
            cubic.on_ack(conn.cwnd_bytes, sim.now_s)
        assert conn.cwnd_bytes == 16_000

    def test_window_equals_wmax_at_inflection(self):
        sim, conn = make_conn()
        cubic = CubicController(conn)
        st = cubic.state
        st.in_slow_start = False
        st.w_max_bytes = 100_000.0
        cubic._start_epoch(0.0)
        cubic.on_ack(1000, st.k_s)
        assert conn.cwnd_bytes == 100_000

    def test_cubic_law_two_seconds_past_k(self):
        # c=0.4 (segments/s^3), w_max=100 segments, t=K+2 -> 103.2 segments
        sim, conn = make_conn()
        cubic = CubicController(conn)
        st = cubic.state
        st.in_slow_start = False
        st.w_max_bytes = 100_000.0
        cubic._start_epoch(0.0)
        assert st.k_s == pytest.approx((100 * 0.3 / 0.4) ** (1 / 3))
        cubic.on_ack(1000, st.k_s + 2.0)
        assert conn.cwnd_bytes == pytest.approx(103_200, abs=1)

    def test_gap_loss_multiplies_by_beta(self):
        sim, conn = make_conn()
        cubic = CubicController(conn)
        conn.set_cwnd(100_000)
        cubic.on_loss("gap", sim.now_s)
        assert conn.cwnd_bytes == 70_000
        assert cubic.state.ssthresh_bytes == 70_000.0
        assert not cubic.state.in_slow_start

    def test_continuity_right_after_loss(self):
        # w(0) on the new epoch equals beta * w_max: no discontinuity.
        sim, conn = make_conn()
        cubic = CubicController(conn)
        conn.set_cwnd(100_000)
        cubic.on_loss("gap", 5.0)
        cubic.on_ack(1000, 5.0)
        assert conn.cwnd_bytes == pytest.approx(70_000, abs=1)

    def test_timeout_resets_to_two_segments_and_slow_start(self):
        sim, conn = make_conn()
        cubic = CubicController(conn)
        conn.set_cwnd(100_000)
        cubic.on_loss("timeout", sim.now_s)
        assert conn.cwnd_bytes == 2_000
        assert cubic.state.in_slow_start

    def test_losses_in_same_rtt_coalesce(self):
        sim, conn = make_conn()
        cubic = CubicController(conn)
        conn._rtt_update(1000.0, 0.0)
        conn.set_cwnd(100_000)
        cubic.on_loss("gap", 5.0)
        cubic.on_loss("gap", 5.4)  # within one srtt of the first
        assert conn.cwnd_bytes == 70_000
        cubic.on_loss("gap", 6.5)
        assert conn.cwnd_bytes == 49_000

    def test_shape_concave_then_convex(self):
        sim, conn = make_conn()
        cubic = CubicController(conn)
        st = cubic.state
        st.in_slow_start = False
        st.w_max_bytes = 100_000.0
        cubic._start_epoch(0.0)
        k = st.k_s
        samples = []
        for t in [0.25 * k, 0.5 * k, 0.75 * k, k, 1.25 * k, 1.5 * k, 1.75 * k]:
            cubic.on_ack(1000, t)
            samples.append(conn.cwnd_bytes)
        diffs = [b - a for a, b in zip(samples, samples[1:])]
        assert diffs[0] > diffs[1] > diffs[2]  # concave before K
        assert diffs[-1] > diffs[-2] > diffs[-3]  # convex after K


class TestFixedPolicy:
    def test_bdp_values(self):
        scn = satcom_uhf_scenario()
        assert fixed_cwnd_policy(scn, 5.0) == 125_000
        assert fixed_cwnd_policy(scn, 10.0) == 8_000

    def test_constant_profile_constant_output(self):
        scn = plain_scenario()
        values = {fixed_cwnd_policy(scn, t) for t in (0.0, 3.3, 77.0)}
        assert len(values) == 1


class TestRandomPolicy:
    def test_monte_carlo_mean_near_zero(self):
        rng = substream(42, "policy/random")
        draws = [random_policy(rng) for _ in range(10_000)]
        assert abs(sum(draws) / len(draws)) < 0.02
        assert all(-1.0 <= d <= 1.0 for d in draws)

    def test_reproducible(self):
        a = [random_policy(substream(7, "policy/random")) for _ in range(1)]
        b = [random_policy(substream(7, "policy/random")) for _ in range(1)]
        assert a == b


class TestIdealFairTime:
    def test_unloaded_satcom_600kb(self):
        # 4.8 Mbit / 1 Mb/s = 4.8 s transfer + 1.0 s setup RTT
        scn = plain_scenario()
        assert ideal_fair_time(scn, 600_000) == pytest.approx(5.8, abs=1e-6)

    def test_residual_zero_is_infeasible(self):
        scn = plain_scenario("0.0 8.0 hog ELEPHANT nonadaptive 1000000")
        assert math.isinf(ideal_fair_time(scn, 600_000))

    def test_transfer_portion_scales_with_flow_count(self):
        scn = plain_scenario()
        t1 = ideal_fair_time(scn, 600_000, n_adaptive_flows=1)
        t2 = ideal_fair_time(scn, 600_000, n_adaptive_flows=2)
        setup = 1.0
        assert t2 - setup == pytest.approx(2 * (t1 - setup), abs=1e-9)

    def test_monotone_in_payload_and_load(self):
        scn = plain_scenario()
        loaded = plain_scenario("0.0 8.0 e ELEPHANT nonadaptive 400000")
        assert ideal_fair_time(scn, 300_000) <= ideal_fair_time(scn, 600_000)
        assert ideal_fair_time(scn, 600_000) <= ideal_fair_time(loaded, 600_000)

    def test_periodic_background_integration(self):
        # 1 Mb/s with a 500 kb/s elephant active half of every period:
        # mean residual 750 kb/s -> 4.8 Mb needs 6.4 s; check piecewise walk.
        scn = plain_scenario("0.0 4.0 e ELEPHANT nonadaptive 500000")
        t = ideal_fair_time(scn, 600_000)
        # first 4 s: 0.5 Mb/s -> 2 Mb; next 2.8 s at 1 Mb/s -> 2.8 Mb: total 4.8
        assert t == pytest.approx(4.0 + 2.8 + 1.0, abs=1e-9)

    def test_full_scenario_reference_value(self):
        scn = satcom_uhf_scenario()
        t = ideal_fair_time(scn, 600_000)
        assert math.isfinite(t) and t > 5.8

    def test_invalid_payload(self):
        with pytest.raises(BaselineError):
            ideal_fair_time(plain_scenario(), 0)
