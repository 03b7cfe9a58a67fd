"""Scenario configuration: line-oriented `section.key = value` text with
repeated `[attacks]` blocks.

Unknown keys are errors, the seed is mandatory (runs must be reproducible,
never wall-clock seeded), and referenced files must exist at parse time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

from .attacks import AttackKind
from .errors import ConfigError
from .transport import ip_to_int

US = 1_000_000


@dataclass
class DeviceConfig:
    address: str
    capacity: int = 10_000
    critical_rate: int = 1_000_000
    halfopen_capacity: int = 128
    halfopen_timeout_s: float = 3.0


@dataclass
class IdpsConfig:
    enabled: bool = False
    mode: str = "ids"
    ruleset: str = ""
    inspection_capacity: int = 5_000
    poll_period_ms: int = 100
    hold_window_s: float = 2.0


@dataclass
class PlantConfig:
    enabled: bool = True
    tick_ms: int = 10
    rate_per_tick: float = 0.1
    box_period_s: float = 5.0
    first_box_s: float = 5.0


@dataclass
class HeartbeatConfig:
    enabled: bool = False
    period_ms: int = 200


@dataclass
class TcpProbeConfig:
    enabled: bool = False
    server_port: int = 61500
    client_address: str = "192.168.1.30"
    connect_at_s: tuple[float, ...] = ()


@dataclass
class AttackConfig:
    name: str
    kind: AttackKind
    target: str = "group"                 # "group" or "device:port"
    rate: int = 0
    start_s: float = 0.0
    stop_s: float = 0.0
    at_s: tuple[float, ...] = ()
    payload: bytes = b"\x00"
    claimed_src: str = ""                 # "a.b.c.d:port", "plc1", or "" (own)
    attacker: str = ""
    attacker_address: str = ""
    attacker_count: int = 1


@dataclass
class ScenarioConfig:
    seed: int
    duration_s: float = 60.0
    event_budget: int = 50_000_000
    latency_us: int = 500
    group: str = "239.192.0.2:61499"
    devices: dict[str, DeviceConfig] = field(default_factory=dict)
    idps: IdpsConfig = field(default_factory=IdpsConfig)
    safemode: str = "gate_and_hold"
    plant: PlantConfig = field(default_factory=PlantConfig)
    heartbeat: HeartbeatConfig = field(default_factory=HeartbeatConfig)
    tcp_probe: TcpProbeConfig = field(default_factory=TcpProbeConfig)
    attacks: list[AttackConfig] = field(default_factory=list)

    @property
    def duration_us(self) -> int:
        return round(self.duration_s * US)

    def attack(self, name: str) -> AttackConfig:
        for a in self.attacks:
            if a.name == name:
                return a
        raise ConfigError("attacks", f"no attack named {name!r}")

    def with_attack_rate(self, name: str, rate: int) -> "ScenarioConfig":
        """Same scenario with one flood's rate substituted (for sweeps)."""
        found = False
        attacks = []
        for a in self.attacks:
            if a.name == name:
                attacks.append(replace(a, rate=rate))
                found = True
            else:
                attacks.append(a)
        if not found:
            raise ConfigError("attacks", f"no attack named {name!r}")
        return replace(self, attacks=attacks)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


def _parse_bool(value: str, path: str) -> bool:
    if value in ("true", "yes", "1", "on"):
        return True
    if value in ("false", "no", "0", "off"):
        return False
    raise ConfigError(path, f"expected a boolean, got {value!r}")


def _parse_int(value: str, path: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(path, f"expected an integer, got {value!r}") from None


def _parse_float(value: str, path: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(path, f"expected a number, got {value!r}") from None


def _parse_floats(value: str, path: str) -> tuple[float, ...]:
    if not value.strip():
        return ()
    return tuple(_parse_float(p.strip(), path) for p in value.split(","))


def _check_address(value: str, path: str) -> str:
    try:
        ip_to_int(value)
    except ValueError as e:
        raise ConfigError(path, str(e)) from None
    return value


_DEFAULT_ADDRESSES = {"plc1": "192.168.1.1", "plc2": "192.168.1.2"}


def parse_scenario_text(text: str, base_dir: str = ".") -> ScenarioConfig:
    seed: int | None = None
    cfg = ScenarioConfig(seed=0)
    cfg.devices = {pid: DeviceConfig(address=addr) for pid, addr in _DEFAULT_ADDRESSES.items()}
    current_attack: AttackConfig | None = None
    attack_index = -1

    def attack_path(key: str) -> str:
        return f"attacks[{attack_index}].{key}"

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[attacks]":
            current_attack = AttackConfig(name="", kind=AttackKind.UDP_FLOOD)
            cfg.attacks.append(current_attack)
            attack_index += 1
            continue
        if line.startswith("["):
            raise ConfigError(f"line {lineno}", f"unknown block {line!r}")
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep or not key:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")

        if current_attack is not None and "." not in key:
            a = current_attack
            if key == "name":
                a.name = value
            elif key == "kind":
                try:
                    a.kind = AttackKind(value)
                except ValueError:
                    raise ConfigError(attack_path("kind"), f"unknown kind {value!r}") from None
            elif key == "target":
                a.target = value
            elif key == "rate":
                a.rate = _parse_int(value, attack_path("rate"))
            elif key == "start_s":
                a.start_s = _parse_float(value, attack_path("start_s"))
            elif key == "stop_s":
                a.stop_s = _parse_float(value, attack_path("stop_s"))
            elif key == "at_s":
                a.at_s = _parse_floats(value, attack_path("at_s"))
            elif key == "payload":
                try:
                    a.payload = bytes.fromhex(value.removeprefix("0x"))
                except ValueError:
                    raise ConfigError(attack_path("payload"), f"bad hex {value!r}") from None
            elif key == "claimed_src":
                a.claimed_src = value
            elif key == "attacker":
                a.attacker = value
            elif key == "attacker_address":
                a.attacker_address = _check_address(value, attack_path("attacker_address"))
            elif key == "attacker_count":
                a.attacker_count = _parse_int(value, attack_path("attacker_count"))
            else:
                raise ConfigError(attack_path(key), "unknown key")
            continue

        section, _, rest = key.partition(".")
        if section == "run":
            if rest == "seed":
                seed = _parse_int(value, key)
            elif rest == "duration_s":
                cfg.duration_s = _parse_float(value, key)
            elif rest == "event_budget":
                cfg.event_budget = _parse_int(value, key)
            else:
                raise ConfigError(key, "unknown key")
        elif section == "net":
            if rest == "latency_us":
                cfg.latency_us = _parse_int(value, key)
            elif rest == "group":
                cfg.group = value
            else:
                raise ConfigError(key, "unknown key")
        elif section == "device":
            dev_id, _, attr = rest.partition(".")
            if dev_id not in cfg.devices:
                raise ConfigError(key, f"unknown device {dev_id!r} (plc1 and plc2 exist)")
            dev = cfg.devices[dev_id]
            if attr == "address":
                dev.address = _check_address(value, key)
            elif attr == "capacity":
                dev.capacity = _parse_int(value, key)
            elif attr == "critical_rate":
                dev.critical_rate = _parse_int(value, key)
            elif attr == "halfopen_capacity":
                dev.halfopen_capacity = _parse_int(value, key)
            elif attr == "halfopen_timeout_s":
                dev.halfopen_timeout_s = _parse_float(value, key)
            else:
                raise ConfigError(key, "unknown key")
        elif section == "idps":
            if rest == "enabled":
                cfg.idps.enabled = _parse_bool(value, key)
            elif rest == "mode":
                if value not in ("off", "ids", "ips"):
                    raise ConfigError(key, f"mode must be off|ids|ips, got {value!r}")
                cfg.idps.mode = value
            elif rest == "ruleset":
                cfg.idps.ruleset = os.path.normpath(os.path.join(base_dir, value))
            elif rest == "inspection_capacity":
                cfg.idps.inspection_capacity = _parse_int(value, key)
            elif rest == "poll_period_ms":
                cfg.idps.poll_period_ms = _parse_int(value, key)
            elif rest == "hold_window_s":
                cfg.idps.hold_window_s = _parse_float(value, key)
            else:
                raise ConfigError(key, "unknown key")
        elif section == "safemode":
            if rest == "policy":
                if value not in ("gate_and_hold", "log_only", "shutdown"):
                    raise ConfigError(key, f"unknown policy {value!r}")
                cfg.safemode = value
            else:
                raise ConfigError(key, "unknown key")
        elif section == "plant":
            if rest == "enabled":
                cfg.plant.enabled = _parse_bool(value, key)
            elif rest == "tick_ms":
                cfg.plant.tick_ms = _parse_int(value, key)
            elif rest == "rate_per_tick":
                cfg.plant.rate_per_tick = _parse_float(value, key)
            elif rest == "box_period_s":
                cfg.plant.box_period_s = _parse_float(value, key)
            elif rest == "first_box_s":
                cfg.plant.first_box_s = _parse_float(value, key)
            else:
                raise ConfigError(key, "unknown key")
        elif section == "heartbeat":
            if rest == "enabled":
                cfg.heartbeat.enabled = _parse_bool(value, key)
            elif rest == "period_ms":
                cfg.heartbeat.period_ms = _parse_int(value, key)
            else:
                raise ConfigError(key, "unknown key")
        elif section == "tcp_probe":
            if rest == "enabled":
                cfg.tcp_probe.enabled = _parse_bool(value, key)
            elif rest == "server_port":
                cfg.tcp_probe.server_port = _parse_int(value, key)
            elif rest == "client_address":
                cfg.tcp_probe.client_address = _check_address(value, key)
            elif rest == "connect_at_s":
                cfg.tcp_probe.connect_at_s = _parse_floats(value, key)
            else:
                raise ConfigError(key, "unknown key")
        else:
            raise ConfigError(key, "unknown section")

    if seed is None:
        raise ConfigError("seed", "run.seed is mandatory: runs must be reproducible")
    cfg.seed = seed
    _validate(cfg)
    return cfg


def _validate(cfg: ScenarioConfig) -> None:
    if cfg.duration_s <= 0:
        raise ConfigError("run.duration_s", "must be positive")
    if cfg.latency_us <= 0:
        raise ConfigError("net.latency_us", "must be positive")
    for dev_id, dev in cfg.devices.items():
        for attr in ("capacity", "critical_rate", "halfopen_capacity"):
            if getattr(dev, attr) <= 0:
                raise ConfigError(f"device.{dev_id}.{attr}", "must be positive")
        if dev.halfopen_timeout_s <= 0:
            raise ConfigError(f"device.{dev_id}.halfopen_timeout_s", "must be positive")
    if cfg.idps.enabled:
        if cfg.idps.mode != "off" and not cfg.idps.ruleset:
            raise ConfigError("idps.ruleset", "required when the engine is enabled")
        if cfg.idps.ruleset and not os.path.exists(cfg.idps.ruleset):
            raise ConfigError("idps.ruleset", f"file not found: {cfg.idps.ruleset}")
        if cfg.idps.inspection_capacity <= 0:
            raise ConfigError("idps.inspection_capacity", "must be positive")
        if cfg.idps.poll_period_ms <= 0:
            raise ConfigError("idps.poll_period_ms", "must be positive")
        if cfg.idps.hold_window_s <= 0:
            raise ConfigError("idps.hold_window_s", "must be positive")
    if cfg.plant.enabled:
        if cfg.plant.tick_ms <= 0:
            raise ConfigError("plant.tick_ms", "must be positive")
        if not 0 < cfg.plant.rate_per_tick <= 1:
            raise ConfigError("plant.rate_per_tick", "must be in (0, 1]")
        if cfg.plant.box_period_s <= 0:
            raise ConfigError("plant.box_period_s", "must be positive")
    seen: set[str] = set()
    for i, a in enumerate(cfg.attacks):
        path = f"attacks[{i}]"
        if not a.name:
            raise ConfigError(f"{path}.name", "attack needs a name")
        if a.name in seen:
            raise ConfigError(f"{path}.name", f"duplicate attack name {a.name!r}")
        seen.add(a.name)
        if a.kind is AttackKind.SPOOF_PUBLISH:
            if not a.at_s:
                raise ConfigError(f"{path}.at_s", "spoof needs send times")
        else:
            if a.rate <= 0:
                raise ConfigError(f"{path}.rate", "flood rate must be positive")
            if a.start_s >= a.stop_s:
                raise ConfigError(f"{path}.start_s", "start must precede stop")
            if a.attacker_count < 1:
                raise ConfigError(f"{path}.attacker_count", "must be >= 1")
            if a.rate % a.attacker_count:
                raise ConfigError(f"{path}.rate", "must divide evenly across attackers")


def parse_scenario_file(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_scenario_text(text, base_dir=os.path.dirname(os.path.abspath(path)))
