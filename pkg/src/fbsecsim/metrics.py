"""Run accounting: ground-truth oracle, availability, report and CSV export.

This is the only layer allowed to read a packet's true origin.  The truth
oracle re-evaluates the ruleset over every packet presented to the engine
with no inspection-capacity limit and its own window bookkeeping, so the
engine's saturation undercount is measured against an independent count.
"""

from __future__ import annotations

import csv
import os
from collections import deque
from dataclasses import dataclass

from .errors import SimError
from .idps import Action, EngineMode, IdpsEngine, Rule
from .plant import Command, Plant, completed_cycles
from .transport import DeviceModel, DeviceState, Packet, Transport

US = 1_000_000

EXIT_CLEAN = 0
EXIT_CONFIG = 2
EXIT_HAZARD = 10
EXIT_COLLAPSE = 11


class ConservationError(SimError):
    """A packet-accounting identity failed; the run is not trustworthy."""


class TruthOracle:
    """First-match rule evaluation with unlimited inspection capacity.

    Windows are re-implemented here (plain deque scans) on purpose: the
    engine's undercount is checked against bookkeeping it does not share.
    """

    def __init__(self, rules: list[Rule]):
        self.rules = rules
        self.windows: dict = {}
        self.true_matches = 0
        self.block_matches = 0

    def observe(self, view, now: int) -> bool:
        """Returns True when an unsaturated engine would have alerted."""
        for rule in self.rules:
            if not rule.static_match(view):
                continue
            if rule.rate is None:
                self.true_matches += 1
                if rule.action is Action.BLOCK:
                    self.block_matches += 1
                return True
            key = (rule.id, view.src_address, view.src_port)
            win = self.windows.get(key)
            if win is None:
                win = self.windows[key] = deque(maxlen=rule.rate.threshold + 1)
            win.append(now)
            if len(win) == rule.rate.threshold + 1 and win[0] > now - rule.rate.window_us:
                self.true_matches += 1
                if rule.action is Action.BLOCK:
                    self.block_matches += 1
                return True
            return False  # matched statically; first-match semantics stop here
        return False


@dataclass
class EngineStats:
    presented: int = 0
    inspected: int = 0
    dropped_by_engine: int = 0
    alerts: int = 0
    blocked: int = 0
    true_matches: int = 0
    attack_presented: int = 0
    attack_blocked: int = 0
    benign_blocked: int = 0
    inspected_block_leak: int = 0  # inspected, block-matched, yet delivered

    @property
    def recall(self) -> float | None:
        if self.attack_presented == 0:
            return None
        return self.attack_blocked / self.attack_presented

    @property
    def precision(self) -> float | None:
        blocked = self.attack_blocked + self.benign_blocked
        if blocked == 0:
            return None
        return self.attack_blocked / blocked


class Recorder:
    """Streaming observer wired into transport, engine and plant hooks."""

    def __init__(self, attacker_ids: set[str], plc_ids: list[str]):
        self.attacker_ids = attacker_ids
        self.plc_ids = plc_ids
        self.oracle: TruthOracle | None = None
        self.engine: IdpsEngine | None = None
        self.engine_stats = EngineStats()
        self.legit_sends: list[tuple[int, int]] = []       # (send time, seq) of shared-true packets
        self.legit_deliveries: list[tuple[int, int]] = []  # (delivery time, seq)
        self.flag_timeline: list[tuple[int, bool]] = []    # attack-flag transitions
        self.liftctl_dispatches: list[int] = []
        self._rule_actions: dict[str, Action] = {}
        self._publisher_id: str | None = None
        self._shared_payload = b"\x41"

    def attach_oracle(self, rules: list[Rule], engine: IdpsEngine) -> None:
        self.oracle = TruthOracle(rules)
        self.engine = engine
        self._rule_actions = {r.id: r.action for r in rules}

    def watch_publisher(self, device_id: str) -> None:
        self._publisher_id = device_id

    # -- hooks ---------------------------------------------------------------

    def on_send(self, packet: Packet) -> None:
        if (packet.true_origin == self._publisher_id
                and packet.payload == self._shared_payload):
            self.legit_sends.append((packet.send_time, packet.seq))

    def on_presented(self, device: DeviceModel, packet: Packet, view, verdict, now: int) -> None:
        st = self.engine_stats
        st.presented += 1
        is_attack = packet.true_origin in self.attacker_ids
        if is_attack:
            st.attack_presented += 1
        if self.oracle is not None:
            self.oracle.observe(view, now)
        if verdict.blocked:
            st.blocked += 1
            if is_attack:
                st.attack_blocked += 1
            else:
                st.benign_blocked += 1
        elif (verdict.inspected and verdict.rule_id is not None
              and self._rule_actions.get(verdict.rule_id) is Action.BLOCK
              and self.engine is not None and self.engine.mode is EngineMode.IPS):
            # The engine evaluated a block match and still let it through.
            st.inspected_block_leak += 1

    def on_delivered(self, packet: Packet, now: int) -> None:
        if (packet.true_origin == self._publisher_id
                and packet.payload == self._shared_payload):
            self.legit_deliveries.append((now, packet.seq))

    def on_flag(self, now: int, value: bool) -> None:
        if not self.flag_timeline or self.flag_timeline[-1][1] != value:
            self.flag_timeline.append((now, value))

    def on_liftctl_dispatch(self, now: int) -> None:
        self.liftctl_dispatches.append(now)

    def finalize_engine(self, engine: IdpsEngine | None) -> None:
        st = self.engine_stats
        if engine is not None:
            st.inspected = engine.inspected
            st.dropped_by_engine = engine.dropped_by_engine
            st.alerts = len(engine.alerts)
        if self.oracle is not None:
            st.true_matches = self.oracle.true_matches

    def flag_true_intervals(self, end: int) -> list[tuple[int, int]]:
        """Half-open [rise, fall) intervals of the attack flag."""
        out = []
        rise = None
        for t, v in self.flag_timeline:
            if v and rise is None:
                rise = t
            elif not v and rise is not None:
                out.append((rise, t))
                rise = None
        if rise is not None:
            out.append((rise, end))
        return out


def _merge_intervals(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[list[int]] = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


@dataclass
class PlantOutcome:
    cycles: list[int]
    availability: float
    hazard: bool
    hazard_time: int | None
    boxes_arrived: int
    boxes_skipped: int
    stalls: list[tuple[int, int]]


def cycle_detector(plant: Plant, recorder: Recorder,
                   devices: dict[str, DeviceModel], duration: int) -> PlantOutcome:
    """Offline pass over the finished run's records.

    Availability is the fraction of the run in which the plant progresses
    normally: not stalled on a shared value that was sent but never reached
    the consumer, not held by a latched hazard, and not downstream of a
    collapsed controller.
    """
    cycles = completed_cycles(plant.samples)
    unavailable: list[tuple[int, int]] = []
    if plant.hazard and plant.hazard_time is not None:
        unavailable.append((plant.hazard_time, duration))
    for dev_id in recorder.plc_ids:
        dev = devices.get(dev_id)
        if dev is None:
            continue
        for t, state in dev.transitions:
            if state is DeviceState.UNRESPONSIVE:
                unavailable.append((t, duration))
                break

    # A sent shared-true packet counts as consumed only if the retract
    # command was written at its delivery instant (the zero-delay chain).
    retract_times = {w.time for w in plant.writes
                     if w.cylinder == 2 and w.command is Command.RETRACT}
    consumed_times = sorted(t for t, _seq in recorder.legit_deliveries if t in retract_times)
    delivered_seqs = {seq: t for t, seq in recorder.legit_deliveries}
    stalls: list[tuple[int, int]] = []
    for send_t, seq in recorder.legit_sends:
        t_d = delivered_seqs.get(seq)
        if t_d is not None and t_d in retract_times:
            continue  # this packet got through and acted
        resume = next((c for c in consumed_times if c >= send_t), duration)
        stalls.append((send_t, resume))
    unavailable.extend(stalls)

    merged = _merge_intervals([(max(0, a), min(duration, b)) for a, b in unavailable])
    lost = sum(b - a for a, b in merged)
    availability = 1.0 - lost / duration if duration > 0 else 1.0
    return PlantOutcome(cycles, availability, plant.hazard, plant.hazard_time,
                        plant.boxes_arrived, plant.boxes_skipped, _merge_intervals(stalls))


@dataclass
class RunReport:
    duration: int
    seed: int
    devices: dict[str, dict]
    transitions: dict[str, list[tuple[int, str]]]
    final_states: dict[str, str]
    engine: EngineStats | None
    alerts: list
    plant: PlantOutcome | None
    subscriber: dict[str, int]
    probe_attempts: list[dict]
    undeliverable: int
    suppressed_dispatches: int
    exit_code: int = EXIT_CLEAN

    def check_conservation(self) -> None:
        for dev_id, c in self.devices.items():
            if c["offered"] != c["ingested"] + c["dropped_capacity"] + c["dropped_unresponsive"]:
                raise ConservationError(f"{dev_id}: offered != ingested + drops")
        if self.engine is not None:
            if self.engine.presented != self.engine.inspected + self.engine.dropped_by_engine:
                raise ConservationError("engine: presented != inspected + dropped_by_engine")


def build_report(duration: int, seed: int, transport: Transport,
                 plc_ids: list[str], engine: IdpsEngine | None, plant: Plant | None,
                 recorder: Recorder, subscriber_stats: dict[str, int],
                 probe_attempts: list[dict], suppressed: int) -> RunReport:
    recorder.finalize_engine(engine)
    devices = {}
    transitions = {}
    final_states = {}
    for dev_id, dev in transport.devices.items():
        devices[dev_id] = dev.counters()
        transitions[dev_id] = [(t, s.value) for t, s in dev.transitions]
        final_states[dev_id] = dev.state_at(duration).value
    outcome = cycle_detector(plant, recorder, transport.devices, duration) if plant else None
    exit_code = EXIT_CLEAN
    if any(final_states.get(p) == DeviceState.UNRESPONSIVE.value for p in plc_ids):
        exit_code = EXIT_COLLAPSE
    if outcome is not None and outcome.hazard:
        exit_code = EXIT_HAZARD
    report = RunReport(
        duration=duration,
        seed=seed,
        devices=devices,
        transitions=transitions,
        final_states=final_states,
        engine=recorder.engine_stats if engine is not None else None,
        alerts=list(engine.alerts) if engine is not None else [],
        plant=outcome,
        subscriber=subscriber_stats,
        probe_attempts=probe_attempts,
        undeliverable=transport.undeliverable,
        suppressed_dispatches=suppressed,
        exit_code=exit_code,
    )
    report.check_conservation()
    return report


# -- CSV export ---------------------------------------------------------------

def metrics_rows(report: RunReport) -> list[tuple[str, str]]:
    rows: list[tuple[str, str]] = [
        ("run.duration_us", str(report.duration)),
        ("run.seed", str(report.seed)),
        ("run.exit_code", str(report.exit_code)),
        ("run.undeliverable", str(report.undeliverable)),
        ("run.suppressed_dispatches", str(report.suppressed_dispatches)),
    ]
    for dev_id in sorted(report.devices):
        for key in sorted(report.devices[dev_id]):
            rows.append((f"device.{dev_id}.{key}", str(report.devices[dev_id][key])))
        rows.append((f"device.{dev_id}.final_state", report.final_states[dev_id]))
    if report.engine is not None:
        e = report.engine
        for key in ("presented", "inspected", "dropped_by_engine", "alerts", "blocked",
                    "true_matches", "attack_presented", "attack_blocked", "benign_blocked",
                    "inspected_block_leak"):
            rows.append((f"engine.{key}", str(getattr(e, key))))
        rows.append(("engine.recall", "" if e.recall is None else f"{e.recall:.6f}"))
        rows.append(("engine.precision", "" if e.precision is None else f"{e.precision:.6f}"))
    if report.plant is not None:
        p = report.plant
        rows.extend([
            ("plant.cycles_completed", str(len(p.cycles))),
            ("plant.availability", f"{p.availability:.6f}"),
            ("plant.hazard", "1" if p.hazard else "0"),
            ("plant.hazard_time_us", "" if p.hazard_time is None else str(p.hazard_time)),
            ("plant.boxes_arrived", str(p.boxes_arrived)),
            ("plant.boxes_skipped", str(p.boxes_skipped)),
        ])
    for key in sorted(report.subscriber):
        rows.append((f"subscriber.{key}", str(report.subscriber[key])))
    for i, attempt in enumerate(report.probe_attempts):
        rows.append((f"tcp_probe.attempt{i}.started_us", str(attempt["started"])))
        rows.append((f"tcp_probe.attempt{i}.established_us",
                     "" if attempt["established"] is None else str(attempt["established"])))
    return rows


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def write_report_files(report: RunReport, plant: Plant | None, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "metrics.csv"), ["key", "value"], metrics_rows(report))
    write_csv(os.path.join(out_dir, "alerts.csv"),
              ["time_us", "rule_id", "proto", "claimed_src", "dst", "msg"],
              [(a.time, a.rule_id, a.proto, a.claimed_src, a.dst, a.msg) for a in report.alerts])
    transitions = []
    for dev_id in sorted(report.transitions):
        for t, state in report.transitions[dev_id]:
            transitions.append((t, dev_id, state))
    transitions.sort(key=lambda r: (r[0], r[1]))
    write_csv(os.path.join(out_dir, "transitions.csv"), ["time_us", "device", "state"], transitions)
    if plant is not None:
        write_csv(os.path.join(out_dir, "plant.csv"),
                  ["time_us", "cyl1_pos", "cyl2_pos", "box_present", "box_pushed_off", "hazard"],
                  [(t, f"{c1 / 1000:.3f}", f"{c2 / 1000:.3f}",
                    int(bp), int(po), int(hz)) for t, c1, c2, bp, po, hz in plant.samples])


def sweep_row(rate: int, report: RunReport, target_device: str) -> list:
    dev = report.devices[target_device]
    e = report.engine
    avail = report.plant.availability if report.plant else 1.0
    return [rate, dev["offered"], dev["ingested"], dev["dropped_capacity"],
            e.dropped_by_engine if e else 0, e.alerts if e else 0,
            e.true_matches if e else 0, f"{avail:.6f}",
            report.final_states[target_device]]
