"""Reliable transport over the simulator: SACK, RTT estimation, retransmission.

The sender exposes an externally settable congestion window (no built-in
congestion control; controllers and the RL agent drive ``set_cwnd``) and a
per-decision-window statistics recorder that feeds the observation pipeline.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable, Optional

from .sim import Packet, SimError, Simulator

FEATURES = (
    "acked_bytes",
    "sent_bytes",
    "retransmissions",
    "timeouts",
    "acks",
    "cumulative_acked_kb",
    "last_rtt_ms",
    "min_rtt_ms",
    "max_rtt_ms",
    "srtt_ms",
    "rttvar_ms",
    "cwnd_bytes",
    "bytes_in_flight",
    "send_queue_bytes",
)
FEATURE_SCHEMA_VERSION = 1

KB = 1000  # bytes per kilobyte throughout


class TransportError(Exception):
    pass


@dataclass
class TransportConfig:
    segment_bytes: int = 1000
    ack_bytes: int = 40
    handshake_bytes: int = 40
    cwnd_min_segments: int = 2
    cwnd_cap_bytes: int = 150_000
    initial_cwnd_bytes: int = 10_000
    rto_min_s: float = 0.2
    rto_max_s: float = 60.0
    rto_initial_s: float = 3.0
    dupack_threshold: int = 3
    sack_ranges_reported: int = 3

    @property
    def cwnd_min_bytes(self) -> int:
        return self.cwnd_min_segments * self.segment_bytes


@dataclass
class Segment:
    size: int
    first_send_s: float
    acked: bool = False
    retransmitted: bool = False
    sends: int = 1
    last_retx_s: float = -math.inf


@dataclass
class StatSnapshot:
    """The 14 feature sample-series collected over one decision window."""

    window_start_s: float
    window_end_s: float
    series: dict[str, list[float]]
    acked_bytes: int
    sent_bytes: int
    retransmissions: int
    timeouts: int
    acks: int


class WindowRecorder:
    """Accumulates per-window feature series between collect() calls.

    Count-like features record running within-window totals (their last
    sample is the window total); state-like features are sampled whenever
    a send, ack, or RTT measurement changes them.
    """

    def __init__(self):
        self.started = False
        self.window_start_s = 0.0
        self._reset_series()

    def _reset_series(self):
        self.series = {name: [] for name in FEATURES}
        self.acked_bytes = 0
        self.sent_bytes = 0
        self.retransmissions = 0
        self.timeouts = 0
        self.acks = 0
        self._win_min_rtt = math.inf
        self._win_max_rtt = -math.inf

    def start(self, now_s: float):
        self.started = True
        self.window_start_s = now_s
        self._reset_series()

    def on_send(self, size: int, conn: "Sender"):
        if not self.started:
            return
        self.sent_bytes += size
        self.series["sent_bytes"].append(float(self.sent_bytes))
        self._sample_state(conn)

    def on_ack(self, newly_bytes: int, conn: "Sender"):
        if not self.started:
            return
        self.acks += 1
        self.acked_bytes += newly_bytes
        self.series["acks"].append(float(self.acks))
        self.series["acked_bytes"].append(float(self.acked_bytes))
        self.series["cumulative_acked_kb"].append(conn.cumulative_acked_kb)
        self._sample_state(conn)

    def on_retransmission(self):
        if not self.started:
            return
        self.retransmissions += 1
        self.series["retransmissions"].append(float(self.retransmissions))

    def on_timeout(self):
        if not self.started:
            return
        self.timeouts += 1
        self.series["timeouts"].append(float(self.timeouts))

    def on_rtt(self, sample_ms: float, srtt_ms: float, rttvar_ms: float):
        if not self.started:
            return
        self._win_min_rtt = min(self._win_min_rtt, sample_ms)
        self._win_max_rtt = max(self._win_max_rtt, sample_ms)
        self.series["last_rtt_ms"].append(sample_ms)
        self.series["min_rtt_ms"].append(self._win_min_rtt)
        self.series["max_rtt_ms"].append(self._win_max_rtt)
        self.series["srtt_ms"].append(srtt_ms)
        self.series["rttvar_ms"].append(rttvar_ms)

    def on_cwnd(self, cwnd_bytes: int):
        if not self.started:
            return
        self.series["cwnd_bytes"].append(float(cwnd_bytes))

    def _sample_state(self, conn: "Sender"):
        self.series["cwnd_bytes"].append(float(conn.cwnd_bytes))
        self.series["bytes_in_flight"].append(float(conn.bytes_in_flight))
        self.series["send_queue_bytes"].append(float(conn.send_queue_bytes))

    def collect(self, now_s: float, window_s: float) -> StatSnapshot:
        if not self.started:
            raise TransportError("statistics collection not started")
        if abs((now_s - self.window_start_s) - window_s) > 1e-9:
            raise TransportError(
                f"collect called mid-window: start={self.window_start_s} now={now_s}"
            )
        snap = StatSnapshot(
            window_start_s=self.window_start_s,
            window_end_s=now_s,
            series={k: list(v) for k, v in self.series.items()},
            acked_bytes=self.acked_bytes,
            sent_bytes=self.sent_bytes,
            retransmissions=self.retransmissions,
            timeouts=self.timeouts,
            acks=self.acks,
        )
        self.window_start_s = now_s
        self._reset_series()
        return snap


class Receiver:
    """Reassembling receiver: acks every data packet with cum + SACK ranges."""

    def __init__(self, sim: Simulator, flow_id: str, host: str, peer: str,
                 config: Optional[TransportConfig] = None):
        self.sim = sim
        self.flow_id = flow_id
        self.host = host
        self.peer = peer
        self.config = config or TransportConfig()
        self.cum = 0  # next expected seq
        self.duplicates = 0
        self.app_bytes = 0
        self._pending_sizes: dict[int, int] = {}  # received out of order, above cum
        sim.attach(host, self._on_packet)

    def _on_packet(self, pkt: Packet, now_s: float):
        if pkt.flow_id != self.flow_id:
            return
        if pkt.kind == "syn":
            self.sim.send(self.host, self.peer, Packet(
                self.flow_id, -1, self.config.handshake_bytes, "synack"))
            return
        if pkt.kind != "data":
            return
        self._ingest(pkt.seq, pkt.size_bytes)
        self._send_ack(pkt.seq)

    def _ingest(self, seq: int, size: int):
        if seq < self.cum or seq in self._pending_sizes:
            self.duplicates += 1
            return
        self._pending_sizes[seq] = size
        while self.cum in self._pending_sizes:
            self.app_bytes += self._pending_sizes.pop(self.cum)
            self.cum += 1

    def sack_ranges(self) -> tuple[tuple[int, int], ...]:
        """Inclusive (start, end) ranges of the out-of-order buffer."""
        ranges: list[list[int]] = []
        for seq in sorted(self._pending_sizes):
            if ranges and seq == ranges[-1][1] + 1:
                ranges[-1][1] = seq
            else:
                ranges.append([seq, seq])
        return tuple((a, b) for a, b in ranges)

    def _send_ack(self, for_seq: int):
        reported = self.sack_ranges()[-self.config.sack_ranges_reported:]
        self.sim.send(self.host, self.peer, Packet(
            self.flow_id, for_seq, self.config.ack_bytes, "ack",
            payload=(self.cum, reported, for_seq),
        ))


class Sender:
    """Sending endpoint with SACK-based loss recovery and Karn RTT estimation."""

    def __init__(self, sim: Simulator, flow_id: str, host: str, peer: str,
                 config: Optional[TransportConfig] = None):
        self.sim = sim
        self.flow_id = flow_id
        self.host = host
        self.peer = peer
        self.config = config or TransportConfig()

        self.established = False
        self.established_at: Optional[float] = None
        self.closed = False
        self._syn_sent_at: Optional[float] = None
        self._syn_retransmitted = False

        self.cwnd_bytes = self.config.initial_cwnd_bytes
        self.bytes_in_flight = 0
        self.next_seq = 0
        self.snd_una = 0
        self.send_queue_bytes = 0
        self.sacked: set[int] = set()
        self.segments: dict[int, Segment] = {}
        self.highest_acked = -1

        self.srtt_ms: Optional[float] = None
        self.rttvar_ms: Optional[float] = None
        self.rto_s = self.config.rto_initial_s
        self.rtt_samples: list[tuple[float, float]] = []  # (time_s, rtt_ms)

        self.cumulative_acked_bytes = 0
        self.payload_enqueued_bytes = 0
        self.completion_target_bytes: Optional[int] = None
        self.complete_at: Optional[float] = None

        self.total_data_packets_sent = 0
        self.total_retransmissions = 0
        self.total_timeouts = 0
        self.total_acks_received = 0
        self.protocol_errors = 0
        # (time_s, event_kind, seq, value): sends/acks carry byte counts,
        # rtt_sample carries the sample in ms
        self.event_log: list[tuple[float, str, int, float]] = []

        self.recorder = WindowRecorder()
        self.ack_listeners: list[Callable[[int, float], None]] = []
        self.loss_listeners: list[Callable[[str, float], None]] = []
        self.established_listeners: list[Callable[[float], None]] = []

        self._timer_event = None
        sim.attach(host, self._on_packet)

    # -- connection lifecycle

    def connect(self):
        if self.established:
            return
        self._syn_sent_at = self.sim.now_s
        self.sim.send(self.host, self.peer, Packet(
            self.flow_id, -1, self.config.handshake_bytes, "syn"))
        self._arm_timer(self.rto_s)

    def _on_packet(self, pkt: Packet, now_s: float):
        if pkt.flow_id != self.flow_id:
            return
        if pkt.kind == "synack":
            self._on_synack(now_s)
        elif pkt.kind == "ack":
            self.on_ack(pkt)

    def _on_synack(self, now_s: float):
        if self.established:
            return
        self.established = True
        self.established_at = now_s
        if not self._syn_retransmitted and self._syn_sent_at is not None:
            self._rtt_update((now_s - self._syn_sent_at) * 1000.0, now_s)
        self._cancel_timer()
        for listener in self.established_listeners:
            listener(now_s)
        self._try_send()

    # -- application interface

    def send_payload(self, n_bytes: int) -> int:
        """Enqueue application bytes; sends whatever the window allows."""
        if self.closed:
            raise TransportError("connection closed")
        if n_bytes < 0:
            raise TransportError("payload size must be >= 0")
        self.send_queue_bytes += n_bytes
        self.payload_enqueued_bytes += n_bytes
        self._try_send()
        return n_bytes

    @property
    def cumulative_acked_kb(self) -> float:
        return self.cumulative_acked_bytes / KB

    @property
    def rto_ms(self) -> float:
        return self.rto_s * 1000.0

    # -- window control

    def set_cwnd(self, target_bytes: int) -> int:
        applied = max(self.config.cwnd_min_bytes,
                      min(int(round(target_bytes)), self.config.cwnd_cap_bytes))
        self.cwnd_bytes = applied
        self.recorder.on_cwnd(applied)
        self._try_send()
        return applied

    # -- sending machinery

    def _try_send(self):
        if not self.established or self.closed:
            return
        while self.send_queue_bytes > 0 and self.bytes_in_flight < self.cwnd_bytes:
            size = min(self.config.segment_bytes, self.send_queue_bytes)
            seq = self.next_seq
            self.next_seq += 1
            self.segments[seq] = Segment(size=size, first_send_s=self.sim.now_s)
            self.send_queue_bytes -= size
            self.bytes_in_flight += size
            self._emit(seq, retransmit=False)
        if self._outstanding_exists() and self._timer_event is None:
            self._arm_timer(self.rto_s)

    def _emit(self, seq: int, retransmit: bool):
        seg = self.segments[seq]
        if retransmit:
            seg.retransmitted = True
            seg.sends += 1
            seg.last_retx_s = self.sim.now_s
            self.total_retransmissions += 1
            self.recorder.on_retransmission()
        self.total_data_packets_sent += 1
        self.event_log.append((
            self.sim.now_s, "retransmit" if retransmit else "send", seq,
            float(seg.size),
        ))
        self.sim.send(self.host, self.peer, Packet(
            self.flow_id, seq, seg.size, "data"))
        self.recorder.on_send(seg.size, self)

    def _outstanding_exists(self) -> bool:
        return self.snd_una < self.next_seq and self.bytes_in_flight > 0

    def _oldest_unacked(self) -> Optional[int]:
        for seq in range(self.snd_una, self.next_seq):
            if not self.segments[seq].acked:
                return seq
        return None

    # -- acknowledgment processing

    def on_ack(self, pkt: Packet):
        cum, ranges, for_seq = pkt.payload
        now = self.sim.now_s
        if cum > self.next_seq or (for_seq is not None and for_seq >= self.next_seq):
            self.protocol_errors += 1
            return
        newly = 0
        newly_max = -1
        while self.snd_una < cum:
            seq = self.snd_una
            self.snd_una += 1
            self.sacked.discard(seq)
            seg = self.segments[seq]
            if not seg.acked:
                seg.acked = True
                newly += seg.size
                newly_max = seq
                self.bytes_in_flight -= seg.size
        for a, b in ranges:
            for seq in range(a, b + 1):
                if seq >= self.next_seq:
                    self.protocol_errors += 1
                    continue
                seg = self.segments[seq]
                if not seg.acked:
                    seg.acked = True
                    newly += seg.size
                    newly_max = max(newly_max, seq)
                    self.bytes_in_flight -= seg.size
                    self.sacked.add(seq)
        self.total_acks_received += 1
        self.cumulative_acked_bytes += newly
        self.highest_acked = max(self.highest_acked, newly_max)
        self.event_log.append((now, "ack", cum, float(newly)))
        self.recorder.on_ack(newly, self)

        if for_seq is not None and for_seq >= 0:
            seg = self.segments.get(for_seq)
            if seg is not None and not seg.retransmitted:
                self._rtt_update((now - seg.first_send_s) * 1000.0, now)

        self._detect_gaps(now)

        for listener in self.ack_listeners:
            listener(newly, now)

        if (self.completion_target_bytes is not None
                and self.complete_at is None
                and self.cumulative_acked_bytes >= self.completion_target_bytes):
            self.complete_at = now

        if self._oldest_unacked() is None:
            self._cancel_timer()
        else:
            self._arm_timer(self.rto_s)
        self._try_send()

    def _detect_gaps(self, now: float):
        # SACK-based loss detection: a hole is retransmitted once at least
        # dupack_threshold segments above it have been selectively acked.
        # A freshly retransmitted segment is left alone for one RTT so
        # in-flight repairs are not duplicated; persisting evidence then
        # re-triggers, which also recovers lost retransmissions.
        if self.highest_acked < self.snd_una:
            return
        sacked_sorted = sorted(self.sacked)
        if len(sacked_sorted) < self.config.dupack_threshold:
            return
        guard_s = (self.srtt_ms or 1000.0) / 1000.0
        for seq in range(self.snd_una, self.highest_acked):
            seg = self.segments[seq]
            if seg.acked:
                continue
            if now - seg.last_retx_s < guard_s:
                continue
            above = len(sacked_sorted) - bisect.bisect_right(sacked_sorted, seq)
            if above >= self.config.dupack_threshold:
                self._emit(seq, retransmit=True)
                for listener in self.loss_listeners:
                    listener("gap", now)

    def _rtt_update(self, sample_ms: float, now: float):
        self.rtt_samples.append((now, sample_ms))
        self.event_log.append((now, "rtt_sample", -1, sample_ms))
        if self.srtt_ms is None:
            self.srtt_ms = sample_ms
            self.rttvar_ms = sample_ms / 2.0
        else:
            self.rttvar_ms = 0.75 * self.rttvar_ms + 0.25 * abs(self.srtt_ms - sample_ms)
            self.srtt_ms = 0.875 * self.srtt_ms + 0.125 * sample_ms
        self.rto_s = min(
            self.config.rto_max_s,
            max(self.config.rto_min_s,
                (self.srtt_ms + 4.0 * self.rttvar_ms) / 1000.0),
        )
        self.recorder.on_rtt(sample_ms, self.srtt_ms, self.rttvar_ms)

    # -- retransmission timer

    def _arm_timer(self, delay_s: float):
        self._cancel_timer()
        self._timer_event = self.sim.schedule_at(
            self.sim.now_s + delay_s, self._on_timer, ())

    def _cancel_timer(self):
        if self._timer_event is not None:
            self._timer_event.cancel()
            self._timer_event = None

    def _on_timer(self):
        self._timer_event = None
        if not self.established:
            # handshake timeout: retransmit SYN
            self._syn_retransmitted = True
            self.rto_s = min(self.rto_s * 2.0, self.config.rto_max_s)
            self.sim.send(self.host, self.peer, Packet(
                self.flow_id, -1, self.config.handshake_bytes, "syn"))
            self._arm_timer(self.rto_s)
            return
        seq = self._oldest_unacked()
        if seq is None:
            return
        self.total_timeouts += 1
        self.event_log.append((self.sim.now_s, "timeout", seq, 0.0))
        self.recorder.on_timeout()
        self.rto_s = min(self.rto_s * 2.0, self.config.rto_max_s)
        self._emit(seq, retransmit=True)
        for listener in self.loss_listeners:
            listener("timeout", self.sim.now_s)
        self._arm_timer(self.rto_s)

    # -- statistics

    def begin_stats(self, now_s: float):
        self.recorder.start(now_s)

    def collect_window_stats(self, now_s: float, window_s: float) -> StatSnapshot:
        return self.recorder.collect(now_s, window_s)


def open_connection(
    sim: Simulator,
    flow_id: str,
    sender_host: str,
    receiver_host: str,
    config: Optional[TransportConfig] = None,
) -> tuple[Sender, Receiver]:
    """Create a sender/receiver pair attached to two hosts of the simulator."""
    config = config or TransportConfig()
    receiver = Receiver(sim, flow_id, receiver_host, sender_host, config)
    sender = Sender(sim, flow_id, sender_host, receiver_host, config)
    return sender, receiver


def write_event_log(conn: Sender, path) -> int:
    """Dump the sender's event log as CSV rows (time, event_kind, seq, value)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "event_kind", "seq", "value"])
        for time_s, kind, seq, value in conn.event_log:
            writer.writerow([repr(time_s), kind, seq, repr(value)])
    return len(conn.event_log)
