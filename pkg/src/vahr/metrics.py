"""HRI metrics: interaction segmentation, attention/fan-out measures, rates,
workload scoring, and a one-way ANOVA for method comparison.

Times enter as integer logical milliseconds and leave as seconds. The
attention measures follow the usual definitions: interaction effort IE is
time spent commanding/attending, neglect tolerance NT is time a robot works
acceptably unattended, attention demand is IE/(IE+NT), and fan-out is total
task time over attention demand. The trust-adjusted variant normalizes the
indirect term by the episode span so it stays a fraction with the right
limits (pure IE/(IE+NT) at full trust, 1.0 at zero trust).
"""
from __future__ import annotations

import json
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

from scipy.special import betainc

from .errors import VahrError
from .events import EventKind, InteractionEvent, interaction_events


class MetricsError(VahrError):
    pass


class DegenerateRun(MetricsError):
    pass


class ZeroRad(MetricsError):
    pass


class OutOfRange(MetricsError):
    pass


class DegenerateGroups(MetricsError):
    pass


class TrustLevel(Enum):
    VERY_LOW = 0.1
    LOW = 0.3
    MEDIUM = 0.5
    HIGH = 0.7
    VERY_HIGH = 0.9

    @property
    def label(self) -> str:
        return _TRUST_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "TrustLevel":
        for level, name in _TRUST_LABELS.items():
            if name == label:
                return level
        raise OutOfRange(f"unknown trust label {label!r}")

    @classmethod
    def from_tlx_level(cls, level: int) -> "TrustLevel":
        """Quantize a 1..21 questionnaire level onto the five trust states."""
        frac = _check_level(level, "trust")
        for candidate in (cls.VERY_LOW, cls.LOW, cls.MEDIUM, cls.HIGH):
            if frac / 100.0 < candidate.value + 0.1:
                return candidate
        return cls.VERY_HIGH


_TRUST_LABELS = {
    TrustLevel.VERY_LOW: "VeryLow",
    TrustLevel.LOW: "Low",
    TrustLevel.MEDIUM: "Medium",
    TrustLevel.HIGH: "High",
    TrustLevel.VERY_HIGH: "VeryHigh",
}

TLX_SUBSCALES = ("mental", "physical", "temporal", "performance",
                 "effort", "frustration", "confidence", "trust")


def _check_level(level: int, name: str) -> float:
    if not isinstance(level, int) or not (1 <= level <= 21):
        raise OutOfRange(f"{name} level {level!r} outside 1..21")
    return (level - 1) / 20.0 * 100.0


@dataclass(frozen=True)
class TlxResponse:
    mental: int
    physical: int
    temporal: int
    performance: int
    effort: int
    frustration: int
    confidence: int
    trust: int

    def __post_init__(self):
        for name in TLX_SUBSCALES:
            _check_level(getattr(self, name), name)


def tlx_score(resp: TlxResponse) -> dict[str, float]:
    """Map each 1..21 level linearly onto a 0..100 percent score."""
    return {name: _check_level(getattr(resp, name), name) for name in TLX_SUBSCALES}


def load_tlx_responses(path: str | Path) -> list[TlxResponse]:
    """Read questionnaire responses from a JSON array of subscale objects."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise OutOfRange("TLX file must contain a JSON array of responses")
    return [TlxResponse(**{k: entry[k] for k in TLX_SUBSCALES}) for entry in data]


# -- segmentation -------------------------------------------------------------


@dataclass(frozen=True)
class UnpairedEvent:
    kind: EventKind
    robot_id: int | None
    sim_time: int
    reason: str


@dataclass
class SegmentResult:
    ie_s: float
    nt_s: float
    per_robot: dict[int | None, tuple[float, float]]  # robot -> (ie_s, nt_s)
    unpaired: list[UnpairedEvent] = field(default_factory=list)


_PAIRS = {
    EventKind.COMMAND_START: EventKind.COMMAND_ACK,
    EventKind.UTTERANCE_START: EventKind.UTTERANCE_END,
    EventKind.ROBOT_AUTONOMOUS_START: (EventKind.ROBOT_IDLE, EventKind.ROBOT_STUCK),
}


def segment(log: Sequence[InteractionEvent]) -> SegmentResult:
    """Split a time-ordered event log into interaction and neglect time.

    IE sums command spans (start to ack) plus operator utterance durations;
    NT sums autonomous episodes (autonomous start to the next idle or stuck).
    Pairing is FIFO per robot; unmatched events are reported and dropped.
    """
    last_t = None
    for ev in log:
        if last_t is not None and ev.sim_time < last_t:
            raise MetricsError("event log not time-ordered")
        last_t = ev.sim_time

    open_q: dict[tuple[EventKind, int | None], deque[InteractionEvent]] = defaultdict(deque)
    ie_ms: dict[int | None, int] = defaultdict(int)
    nt_ms: dict[int | None, int] = defaultdict(int)
    unpaired: list[UnpairedEvent] = []

    def close(start_kind: EventKind, ev: InteractionEvent, bucket: dict) -> None:
        q = open_q[(start_kind, ev.robot_id)]
        if not q:
            unpaired.append(UnpairedEvent(ev.kind, ev.robot_id, ev.sim_time,
                                          "end without start"))
            return
        start = q.popleft()
        bucket[ev.robot_id] += ev.sim_time - start.sim_time

    for ev in log:
        if ev.kind in _PAIRS:
            open_q[(ev.kind, ev.robot_id)].append(ev)
        elif ev.kind == EventKind.COMMAND_ACK:
            close(EventKind.COMMAND_START, ev, ie_ms)
        elif ev.kind == EventKind.UTTERANCE_END:
            close(EventKind.UTTERANCE_START, ev, ie_ms)
        elif ev.kind in (EventKind.ROBOT_IDLE, EventKind.ROBOT_STUCK):
            close(EventKind.ROBOT_AUTONOMOUS_START, ev, nt_ms)
        # PuzzlePiecePlaced carries no duration

    for (kind, robot_id), q in open_q.items():
        for ev in q:
            unpaired.append(UnpairedEvent(kind, robot_id, ev.sim_time,
                                          "start without end"))

    per_robot: dict[int | None, tuple[float, float]] = {}
    for rid in sorted(set(ie_ms) | set(nt_ms), key=lambda r: (r is None, r)):
        per_robot[rid] = (ie_ms[rid] / 1000.0, nt_ms[rid] / 1000.0)
    return SegmentResult(
        ie_s=sum(v for v in ie_ms.values()) / 1000.0,
        nt_s=sum(v for v in nt_ms.values()) / 1000.0,
        per_robot=per_robot,
        unpaired=unpaired,
    )


# -- attention measures --------------------------------------------------------


def compute_rad(ie_s: float, nt_s: float) -> float:
    """Fraction of time spent interacting: IE / (IE + NT)."""
    if ie_s + nt_s <= 0:
        raise DegenerateRun("IE + NT must be positive")
    return ie_s / (ie_s + nt_s)


def compute_fo(total_task_time_s: float, rad: float) -> float:
    """Fan-out in seconds: total task time / attention demand."""
    if rad <= 0:
        raise ZeroRad("attention demand must be positive")
    return total_task_time_s / rad


def trust_adjusted_rad(dit: float, nt_s: float, ie_s: float,
                       trust: "TrustLevel | float") -> float:
    """Attention demand with an indirect, trust-weighted neglect component.

    The indirect term NT * (1 - trust) is normalized by the episode span
    (IE + NT) so the result remains a fraction: full trust collapses back to
    the direct term, zero trust saturates at 1.
    """
    if ie_s + nt_s <= 0:
        raise DegenerateRun("IE + NT must be positive")
    value = trust.value if isinstance(trust, TrustLevel) else float(trust)
    return dit + nt_s * (1.0 - value) / (ie_s + nt_s)


# -- success rates -------------------------------------------------------------


@dataclass(frozen=True)
class TaskSpec:
    """What counts as success for one task in a run."""

    name: str                                  # "I", "II" or "III"
    robots: tuple[int, ...]
    expected_zones: dict[int, str] | None = None  # task I zone assignment
    initiator: int | None = None                  # task III ordering anchor


@dataclass(frozen=True)
class TaskOutcome:
    name: str
    success: bool
    detail: str = ""
    led: bool | None = None  # task III only


@dataclass
class RateReport:
    command_success_rate: float | None
    task_success_rate: float | None
    communication_success_rate: float | None
    commands_issued: int
    commands_acked: int
    exchanges_attempted: int
    exchanges_recognized: int
    outcomes: list[TaskOutcome] = field(default_factory=list)


def _task_windows(records: Sequence[dict[str, Any]]) -> dict[str, tuple[int, int]]:
    """Task name -> (start index, end index) into the record list.

    Index windows rather than timestamp windows: back-to-back tasks share a
    boundary timestamp, and record order is what separates them.
    """
    windows: dict[str, tuple[int, int]] = {}
    starts: dict[str, int] = {}
    for i, rec in enumerate(records):
        if rec.get("kind") != "task":
            continue
        if rec["phase"] == "start":
            starts[rec["task"]] = i
        elif rec["phase"] == "end" and rec["task"] in starts:
            windows[rec["task"]] = (starts[rec["task"]], i)
    return windows


def _evaluate_task(spec: TaskSpec, records: Sequence[dict[str, Any]],
                   window: tuple[int, int] | None) -> TaskOutcome:
    if window is None:
        return TaskOutcome(spec.name, False, "task never ran")
    lo, hi = window
    inside = records[lo + 1:hi]
    deliveries = [r for r in inside if r.get("kind") == "delivery"]

    if spec.name == "I":
        assert spec.expected_zones is not None
        by_robot = {rid: [d["zone"] for d in deliveries if d["robot_id"] == rid]
                    for rid in spec.robots}
        ok = all(by_robot[rid] == [spec.expected_zones[rid]] for rid in spec.robots)
        return TaskOutcome(spec.name, ok, f"deliveries {by_robot}")

    if spec.name == "II":
        weather = next((r["value"] for r in inside if r.get("kind") == "weather"), None)
        if weather is None:
            return TaskOutcome(spec.name, False, "no weather draw recorded")
        expected = "A" if weather == "sunny" else "C"
        by_robot = {rid: [d["zone"] for d in deliveries if d["robot_id"] == rid]
                    for rid in spec.robots}
        ok = all(zones == [expected] for zones in by_robot.values())
        return TaskOutcome(spec.name, ok, f"weather {weather}, deliveries {by_robot}")

    if spec.name == "III":
        assert spec.initiator is not None
        peers = [r for r in spec.robots if r != spec.initiator]
        peer = peers[0] if peers else None
        init_unload = next((d["t"] for d in deliveries
                            if d["robot_id"] == spec.initiator and d["zone"] == "D"), None)
        peer_load_start = next((r["t"] for r in inside
                                if r.get("kind") == "phase" and r.get("to") == "Loading"
                                and r.get("robot_id") == peer), None)
        all_d = {rid: [d["zone"] for d in deliveries if d["robot_id"] == rid]
                 for rid in spec.robots}
        zones_ok = all(zones == ["D"] for zones in all_d.values())
        ordered = (init_unload is not None and peer_load_start is not None
                   and init_unload < peer_load_start)
        led = zones_ok and ordered
        return TaskOutcome(spec.name, led, f"deliveries {all_d}, ordered={ordered}", led=led)

    raise MetricsError(f"unknown task {spec.name!r}")


def success_rates(records: Sequence[dict[str, Any]],
                  task_specs: Sequence[TaskSpec]) -> RateReport:
    """Command, task, and communication success rates from a run log.

    Commands: acked over issued. Tasks: per-task success over tasks run.
    Communication: utterance exchanges that produced a recognized intent over
    exchanges attempted. Empty denominators report as None.
    """
    issued = acked = 0
    attempted = recognized = 0
    for rec in records:
        if rec.get("kind") == "interaction":
            if rec["event"] == EventKind.COMMAND_START.value:
                issued += 1
            elif rec["event"] == EventKind.COMMAND_ACK.value:
                acked += 1
        elif rec.get("kind") == "interpretation":
            attempted += 1
            if rec["recognized"]:
                recognized += 1

    windows = _task_windows(records)
    outcomes = [_evaluate_task(spec, records, windows.get(spec.name))
                for spec in task_specs]

    return RateReport(
        command_success_rate=(acked / issued) if issued else None,
        task_success_rate=(sum(o.success for o in outcomes) / len(outcomes))
        if outcomes else None,
        communication_success_rate=(recognized / attempted) if attempted else None,
        commands_issued=issued,
        commands_acked=acked,
        exchanges_attempted=attempted,
        exchanges_recognized=recognized,
        outcomes=outcomes,
    )


# -- ANOVA ----------------------------------------------------------------------


def anova_one_way(group_a: Sequence[float], group_b: Sequence[float]) -> tuple[float, float]:
    """One-way F test between two groups; p from the F-distribution tail.

    Zero within-group variance with equal means degenerates to (0, 1); with
    distinct means the statistic is infinite and p is 0.
    """
    for name, group in (("a", group_a), ("b", group_b)):
        if len(group) < 2:
            raise DegenerateGroups(f"group {name} needs at least 2 values")
        if any(not math.isfinite(x) for x in group):
            raise DegenerateGroups(f"group {name} contains non-finite values")

    n1, n2 = len(group_a), len(group_b)
    m1 = sum(group_a) / n1
    m2 = sum(group_b) / n2
    grand = (sum(group_a) + sum(group_b)) / (n1 + n2)
    ssb = n1 * (m1 - grand) ** 2 + n2 * (m2 - grand) ** 2
    ssw = sum((x - m1) ** 2 for x in group_a) + sum((x - m2) ** 2 for x in group_b)
    df_between = 1
    df_within = n1 + n2 - 2

    if ssw == 0.0:
        return (0.0, 1.0) if ssb == 0.0 else (math.inf, 0.0)
    f_stat = (ssb / df_between) / (ssw / df_within)
    # upper tail of F(df_between, df_within) via the regularized incomplete beta
    p_value = float(betainc(df_within / 2.0, df_between / 2.0,
                            df_within / (df_within + df_between * f_stat)))
    return f_stat, min(max(p_value, 0.0), 1.0)


# -- report assembly -------------------------------------------------------------


@dataclass
class MetricsReport:
    ie_s: float
    nt_s: float
    dit: float | None
    iit: float | None
    rad: float | None
    fo_s: float | None
    total_task_time_s: float
    command_success_rate: float | None
    task_success_rate: float | None
    communication_success_rate: float | None
    command_failure_rate: float | None
    task_failure_rate: float | None
    communication_failure_rate: float | None
    solved_puzzle_parts: int
    trust: TrustLevel | None = None
    degenerate: bool = False

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "ie_s": self.ie_s,
            "nt_s": self.nt_s,
            "dit": self.dit,
            "iit": self.iit,
            "rad": self.rad,
            "fo_s": self.fo_s,
            "total_task_time_s": self.total_task_time_s,
            "command_success_rate": self.command_success_rate,
            "task_success_rate": self.task_success_rate,
            "communication_success_rate": self.communication_success_rate,
            "command_failure_rate": self.command_failure_rate,
            "task_failure_rate": self.task_failure_rate,
            "communication_failure_rate": self.communication_failure_rate,
            "solved_puzzle_parts": self.solved_puzzle_parts,
            "trust": self.trust.label if self.trust else None,
            "degenerate": self.degenerate,
        }
        return out

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "MetricsReport":
        trust = TrustLevel.from_label(data["trust"]) if data.get("trust") else None
        return cls(**{**{k: data[k] for k in data if k != "trust"}, "trust": trust})


def build_report(records: Sequence[dict[str, Any]],
                 task_specs: Sequence[TaskSpec] = (),
                 trust: TrustLevel | None = None) -> MetricsReport:
    """Compute the full metrics report from a persisted or in-memory log."""
    events = interaction_events(records)
    seg = segment(events)
    rates = success_rates(records, task_specs)

    windows = _task_windows(records)
    if windows:
        first = min(lo for lo, _ in windows.values())
        last = max(hi for _, hi in windows.values())
        total_s = (records[last]["t"] - records[first]["t"]) / 1000.0
    elif records:
        total_s = (records[-1]["t"] - records[0]["t"]) / 1000.0
    else:
        total_s = 0.0

    degenerate = seg.ie_s + seg.nt_s <= 0
    rad = None if degenerate else compute_rad(seg.ie_s, seg.nt_s)
    fo = None if (rad is None or rad <= 0 or total_s <= 0) else compute_fo(total_s, rad)
    iit = None
    if trust is not None and not degenerate:
        iit = seg.nt_s * (1.0 - trust.value) / (seg.ie_s + seg.nt_s)

    def inverse(rate: float | None) -> float | None:
        return None if rate is None else 1.0 - rate

    puzzle = sum(1 for ev in events if ev.kind == EventKind.PUZZLE_PIECE_PLACED)
    return MetricsReport(
        ie_s=seg.ie_s,
        nt_s=seg.nt_s,
        dit=rad,
        iit=iit,
        rad=rad,
        fo_s=fo,
        total_task_time_s=total_s,
        command_success_rate=rates.command_success_rate,
        task_success_rate=rates.task_success_rate,
        communication_success_rate=rates.communication_success_rate,
        command_failure_rate=inverse(rates.command_success_rate),
        task_failure_rate=inverse(rates.task_success_rate),
        communication_failure_rate=inverse(rates.communication_success_rate),
        solved_puzzle_parts=puzzle,
        trust=trust,
        degenerate=degenerate,
    )
