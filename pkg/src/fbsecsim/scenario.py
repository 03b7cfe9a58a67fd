"""Scenario assembly and execution.

Builds the two-PLC world from a ScenarioConfig: plant, devices, transport,
the controller network on each PLC, the optional inspection engine packaged
as a composite block, the chosen safe-mode wiring, attack schedules and the
optional TCP probe pair.  Everything runs on one scheduler; a run is
deterministic given the config (seed included).

Safe-mode wiring on the subscriber PLC:
  gate_and_hold  every event path into LiftCtl goes through an event switch
                 whose guard is the attack flag A; actuator writes are also
                 frozen while A holds.  Requires the engine; without it the
                 wiring falls back to direct connections.
  log_only       direct connections, engine only logs.
  shutdown       direct connections; the first A=true suspends the
                 application blocks for the rest of the run.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .attacks import AttackKind, AttackSpec, attacker_device, schedule_flood, schedule_spoof
from .config import AttackConfig, ScenarioConfig
from .control import make_ix, make_liftctl, make_qx, make_thrustctl
from .csifb import make_client, make_publisher, make_server, make_subscriber
from .errors import ConfigError
from .fbnet import FBNetwork, Scheduler, Trace, make_e_switch
from .idps import IdpsEngine, make_idps_cfb, parse_rules
from .metrics import Recorder, RunReport, build_report, sweep_row, write_report_files
from .plant import Plant
from .transport import DeviceModel, DeviceState, Endpoint, GroupAddress, Transport, ip_to_int
from .values import Bool, Int, Str, TRUE

US = 1_000_000
PUB_SRC_PORT = 40001
CLIENT_PORT = 53000
PLC_IDS = ["plc1", "plc2"]


@dataclass
class RunResult:
    report: RunReport
    trace: Trace
    plant: Plant | None
    recorder: Recorder
    config: ScenarioConfig
    networks: dict[str, FBNetwork]
    engine: IdpsEngine | None
    transport: Transport
    client_state: object | None = None


def _parse_group(group: str) -> GroupAddress:
    addr, _, port = group.rpartition(":")
    return GroupAddress(ip_to_int(addr), int(port))


def _resolve_target(raw: str, transport: Transport, group: GroupAddress,
                    path: str) -> Endpoint | GroupAddress:
    if raw == "group":
        return group
    dev_id, _, port = raw.partition(":")
    if dev_id not in transport.devices:
        raise ConfigError(path, f"unknown target device {dev_id!r}")
    if not port:
        raise ConfigError(path, "target needs device:port")
    dev = transport.devices[dev_id]
    return Endpoint(dev_id, dev.address, int(port))


def _resolve_claimed(raw: str, transport: Transport,
                     attacker_id: str, attacker_addr: int) -> Endpoint:
    if not raw:
        return Endpoint(attacker_id, attacker_addr, 40000)
    if raw == "plc1":
        return Endpoint("plc1", transport.devices["plc1"].address, PUB_SRC_PORT)
    addr, _, port = raw.rpartition(":")
    return Endpoint("spoofed", ip_to_int(addr), int(port) if port else 40000)


def target_device_id(attack: AttackConfig) -> str:
    """Device the attack lands on; group targets hit the subscriber PLC."""
    if attack.target == "group":
        return "plc2"
    return attack.target.partition(":")[0]


def run_scenario(cfg: ScenarioConfig, record_trace: bool = True) -> RunResult:
    scheduler = Scheduler(max_events=cfg.event_budget)
    trace = Trace(enabled=record_trace)
    duration = cfg.duration_us
    group = _parse_group(cfg.group)

    transport = Transport(scheduler, latency_us=cfg.latency_us)
    devices: dict[str, DeviceModel] = {}
    for dev_id in PLC_IDS:
        d = cfg.devices[dev_id]
        devices[dev_id] = transport.add_device(DeviceModel(
            dev_id, ip_to_int(d.address), capacity=d.capacity,
            critical_rate=d.critical_rate, halfopen_capacity=d.halfopen_capacity,
            halfopen_timeout_us=round(d.halfopen_timeout_s * US), seed=cfg.seed))

    recorder = Recorder(attacker_ids=set(), plc_ids=list(PLC_IDS))
    recorder.watch_publisher("plc1")
    transport.on_send = recorder.on_send
    transport.on_presented = recorder.on_presented
    transport.on_delivered = recorder.on_delivered

    services = {"transport": transport}
    net1 = FBNetwork(scheduler, trace, name="plc1", services=services)
    net2 = FBNetwork(scheduler, trace, name="plc2", services=services)
    net1.host_down = lambda: devices["plc1"].state is DeviceState.UNRESPONSIVE
    net2.host_down = lambda: devices["plc2"].state is DeviceState.UNRESPONSIVE

    plant = Plant(cfg.plant.rate_per_tick) if cfg.plant.enabled else None

    # -- engine and its composite block on the subscriber PLC ---------------
    engine: IdpsEngine | None = None
    cfb_refs: dict[str, str] = {}
    gate_active = False
    if cfg.idps.enabled:
        engine = IdpsEngine(inspection_capacity=cfg.idps.inspection_capacity)
        devices["plc2"].engine = engine
        cfb = make_idps_cfb(engine, hold_window_us=round(cfg.idps.hold_window_s * US))
        cfb_refs = cfb.instantiate(net2, "IDPS")
        sifb_id = cfb_refs["PARAMS"].rsplit(".", 1)[0]
        engine.on_alert = lambda seq: net2.set_data_out(sifb_id, "ALERT_SEQ", Int(seq))
        params = f"mode={cfg.idps.mode};rules={cfg.idps.ruleset}"
        net2.set_data_in(sifb_id, "PARAMS", Str(params))
        if cfg.idps.mode != "off":
            with open(cfg.idps.ruleset, "r", encoding="utf-8") as f:
                recorder.attach_oracle(parse_rules(f.read()), engine)
        gate_active = cfg.safemode == "gate_and_hold"

    # -- PLC1: sensors, ThrustCtl, actuator, publisher -----------------------
    if plant is not None:
        net1.add(make_ix("IX_BoxTop")).add(make_ix("IX_Cyl1End"))
        net1.add(make_thrustctl("ThrustCtl"))
        net1.add(make_qx("QX_Cyl1", plant, cylinder=1))
        net1.add(make_publisher("PUB", transport, "plc1", devices["plc1"].address, PUB_SRC_PORT))
        net1.connect("IX_BoxTop.IND", "ThrustCtl.BOXTOP").connect("IX_BoxTop.Q", "ThrustCtl.BOXQ")
        net1.connect("IX_Cyl1End.IND", "ThrustCtl.CYLEND").connect("IX_Cyl1End.Q", "ThrustCtl.ENDQ")
        net1.connect("ThrustCtl.DRIVE", "QX_Cyl1.REQ").connect("ThrustCtl.CMD", "QX_Cyl1.CMD")
        net1.connect("ThrustCtl.SEND", "PUB.REQ").connect("ThrustCtl.SV", "PUB.SD_1")
        net1.set_data_in("PUB", "QI", TRUE)
        net1.set_data_in("PUB", "ID", Str(cfg.group))
        net1.post("PUB", "INIT")

    # -- PLC2: subscriber, gates, LiftCtl, actuator ---------------------------
    if plant is not None:
        net2.add(make_subscriber("SUB", net2, transport, "plc2"))
        net2.add(make_ix("IX_Box"))
        net2.add(make_liftctl("LiftCtl"))
        net2.add(make_qx("QX_Cyl2", plant, cylinder=2, gated=gate_active))
        net2.connect("LiftCtl.DRIVE", "QX_Cyl2.REQ").connect("LiftCtl.CMD", "QX_Cyl2.CMD")
        net2.connect("SUB.RD_1", "LiftCtl.SV")
        net2.connect("IX_Box.Q", "LiftCtl.BOXQ")
        if gate_active:
            net2.add(make_e_switch("GATE_SV")).add(make_e_switch("GATE_BOX"))
            net2.connect("SUB.IND", "GATE_SV.EI").connect("GATE_SV.EO0", "LiftCtl.REQ")
            net2.connect("IX_Box.IND", "GATE_BOX.EI").connect("GATE_BOX.EO0", "LiftCtl.BOX")
            net2.connect(cfb_refs["A"], "GATE_SV.G")
            net2.connect(cfb_refs["A"], "GATE_BOX.G")
            net2.connect(cfb_refs["A"], "QX_Cyl2.GATE")
        else:
            net2.connect("SUB.IND", "LiftCtl.REQ")
            net2.connect("IX_Box.IND", "LiftCtl.BOX")
        net2.set_data_in("SUB", "QI", TRUE)
        net2.set_data_in("SUB", "ID", Str(cfg.group))
        net2.post("SUB", "INIT")

    # -- observers ------------------------------------------------------------
    recorder.on_flag(0, False)
    app_blocks = {"SUB", "LiftCtl", "QX_Cyl2", "IX_Box"}
    shutdown_policy = cfg.safemode == "shutdown" and engine is not None

    def observe_emit(inst: str, port: str, value, now: int) -> None:
        if inst.endswith("ALERTCHECK") and port == "QO":
            recorder.on_flag(now, bool(value.raw))
            if shutdown_policy and value.raw:
                net2.suspended.update(app_blocks)

    def observe_dispatch(inst: str, event: str, now: int) -> None:
        if inst == "LiftCtl":
            recorder.on_liftctl_dispatch(now)

    net2.on_emit = observe_emit
    net2.on_dispatch = observe_dispatch

    # -- lifecycle and periodic events ----------------------------------------
    if engine is not None:
        net2.post(*cfb_refs["INIT"].rsplit(".", 1))
        poll_us = cfg.idps.poll_period_ms * 1000
        poll_inst, poll_port = cfb_refs["POLL"].rsplit(".", 1)

        def poll():
            net2.dispatch(poll_inst, poll_port)
            if scheduler.now + poll_us <= duration:
                scheduler.at(scheduler.now + poll_us, poll)

        scheduler.at(poll_us, poll)

    if plant is not None:
        tick_us = cfg.plant.tick_ms * 1000
        arrivals = []
        t = round(cfg.plant.first_box_s * US)
        while t < duration:
            arrivals.append(t)
            t += round(cfg.plant.box_period_s * US)
        arrival_iter = iter(arrivals)
        next_arrival = next(arrival_iter, None)
        sensor_state = {"IX_BoxTop": False, "IX_Cyl1End": False, "IX_Box": False}

        def scan(net: FBNetwork, inst: str, bit: bool) -> None:
            if bit != sensor_state[inst]:
                sensor_state[inst] = bit
                net.set_data_in(inst, "NEWQ", Bool(bit))
                net.dispatch(inst, "SCAN")

        def tick():
            nonlocal next_arrival
            now = scheduler.now
            plant.step(now)
            while next_arrival is not None and next_arrival <= now:
                plant.try_box_arrival(now)
                next_arrival = next(arrival_iter, None)
            plant.sample(now)
            scan(net1, "IX_BoxTop", plant.sensor_box_top())
            scan(net1, "IX_Cyl1End", plant.sensor_cyl1_end())
            scan(net2, "IX_Box", plant.sensor_box())
            if now + tick_us <= duration:
                scheduler.at(now + tick_us, tick)

        plant.sample(0)
        scheduler.at(tick_us, tick)

        if cfg.heartbeat.enabled:
            hb_us = cfg.heartbeat.period_ms * 1000

            def heartbeat():
                net1.dispatch("ThrustCtl", "HB")
                if scheduler.now + hb_us <= duration:
                    scheduler.at(scheduler.now + hb_us, heartbeat)

            scheduler.at(hb_us, heartbeat)

    # -- attacks ---------------------------------------------------------------
    for i, a in enumerate(cfg.attacks):
        attacker_id = a.attacker or f"attacker{i + 1}"
        attacker_addr = ip_to_int(a.attacker_address) if a.attacker_address else ip_to_int(f"10.0.0.{66 + i}")
        target = _resolve_target(a.target, transport, group, f"attacks[{i}].target")
        spec = AttackSpec(
            name=a.name, kind=a.kind, attacker_id=attacker_id, target=target,
            claimed_src=_resolve_claimed(a.claimed_src, transport, attacker_id, attacker_addr),
            payload=a.payload, rate=a.rate,
            start=round(a.start_s * US), stop=round(a.stop_s * US),
            send_times=tuple(round(t * US) for t in a.at_s),
            attacker_count=a.attacker_count)
        spec.validate(cfg.event_budget)
        if spec.kind is AttackKind.SPOOF_PUBLISH:
            dev = attacker_device(transport, attacker_id, attacker_addr)
            recorder.attacker_ids.add(dev.device_id)
            schedule_spoof(spec, transport, scheduler)
        else:
            for dev in schedule_flood(spec, transport, scheduler, attacker_addr):
                recorder.attacker_ids.add(dev.device_id)

    # -- optional TCP probe pair ------------------------------------------------
    client_inst = None
    if cfg.tcp_probe.enabled:
        probe_dev = transport.add_device(DeviceModel(
            "client1", ip_to_int(cfg.tcp_probe.client_address), seed=cfg.seed))
        net_probe = FBNetwork(scheduler, trace, name="client1", services=services)
        net2.add(make_server("SRV", net2, transport, "plc2", cfg.tcp_probe.server_port))
        net2.set_data_in("SRV", "QI", TRUE)
        net2.post("SRV", "INIT")
        client_inst = make_client("CLIENT", net_probe, transport, "client1",
                                  probe_dev.address, CLIENT_PORT)
        net_probe.add(client_inst)
        server_addr = cfg.devices["plc2"].address
        net_probe.set_data_in(
            "CLIENT", "ID", Str(f"plc2@{server_addr}:{cfg.tcp_probe.server_port}"))
        for t_s in cfg.tcp_probe.connect_at_s:
            net_probe.post("CLIENT", "INIT", delay=round(t_s * US))

    # -- run ---------------------------------------------------------------------
    scheduler.run_until(duration)

    sub_stats: dict[str, int] = {}
    if plant is not None:
        s = net2.instances["SUB"].state
        sub_stats = {"accepted": s.accepted, "malformed": s.malformed}
    probe_attempts = []
    if client_inst is not None:
        probe_attempts = [{"started": at.started, "established": at.established}
                          for at in client_inst.state.attempts]
    suppressed = net1.suppressed + net2.suppressed
    report = build_report(duration, cfg.seed, transport, PLC_IDS, engine, plant,
                          recorder, sub_stats, probe_attempts, suppressed)
    return RunResult(report=report, trace=trace, plant=plant, recorder=recorder,
                     config=cfg, networks={"plc1": net1, "plc2": net2},
                     engine=engine, transport=transport,
                     client_state=client_inst.state if client_inst else None)


def write_outputs(result: RunResult, out_dir: str) -> None:
    write_report_files(result.report, result.plant, out_dir)
    if result.trace.enabled:
        with open(os.path.join(out_dir, "trace.txt"), "w") as f:
            for line in result.trace.lines():
                f.write(line + "\n")


def run_sweep(cfg: ScenarioConfig, attack_name: str, rates: list[int]):
    """One sealed run per rate, same seed, rate substituted into the attack."""
    if not rates:
        raise ConfigError("rates", "sweep needs at least one rate")
    if sorted(rates) != list(rates) or len(set(rates)) != len(rates):
        raise ConfigError("rates", "rates must be strictly increasing")
    target = target_device_id(cfg.attack(attack_name))
    rows = []
    results = []
    for rate in rates:
        result = run_scenario(cfg.with_attack_rate(attack_name, rate), record_trace=False)
        rows.append(sweep_row(rate, result.report, target))
        results.append(result)
    return rows, results
