"""Scenario file parsing and validation diagnostics."""

import pytest

from fbsecsim.attacks import AttackKind
from fbsecsim.config import parse_scenario_file, parse_scenario_text
from fbsecsim.data import list_scenarios, scenario_path
from fbsecsim.errors import ConfigError

MINIMAL = "run.seed = 1\n"


class TestParsing:
    def test_shipped_baseline_is_valid_and_attack_free(self):
        cfg = parse_scenario_file(scenario_path("baseline"))
        assert cfg.seed == 42 and cfg.duration_s == 60
        assert cfg.attacks == []
        assert not cfg.idps.enabled

    def test_every_shipped_scenario_parses(self):
        for name in list_scenarios():
            parse_scenario_file(scenario_path(name))

    def test_minimal_defaults(self):
        cfg = parse_scenario_text(MINIMAL)
        assert cfg.devices["plc1"].capacity == 10_000
        assert cfg.devices["plc2"].critical_rate == 1_000_000
        assert cfg.devices["plc2"].halfopen_capacity == 128
        assert cfg.latency_us == 500
        assert cfg.safemode == "gate_and_hold"

    def test_comments_and_blanks_ignored(self):
        cfg = parse_scenario_text("# hello\n\nrun.seed = 5  # trailing\n")
        assert cfg.seed == 5

    def test_attack_block(self):
        cfg = parse_scenario_text(MINIMAL + "[attacks]\nname = f\nkind = udp_flood\n"
                                            "rate = 100\nstart_s = 1\nstop_s = 2\n"
                                            "target = plc2:61499\n")
        assert len(cfg.attacks) == 1
        a = cfg.attacks[0]
        assert a.kind is AttackKind.UDP_FLOOD and a.rate == 100

    def test_with_attack_rate_substitution(self):
        cfg = parse_scenario_file(scenario_path("sweep"))
        cfg2 = cfg.with_attack_rate("flood", 777)
        assert cfg2.attack("flood").rate == 777
        assert cfg.attack("flood").rate == 50_000  # original untouched


class TestErrors:
    def test_missing_seed(self):
        with pytest.raises(ConfigError) as exc:
            parse_scenario_text("run.duration_s = 5\n")
        assert exc.value.path == "seed"

    def test_negative_rate_path(self):
        text = MINIMAL + "[attacks]\nname = f\nkind = udp_flood\nrate = -5\nstart_s = 1\nstop_s = 2\n"
        with pytest.raises(ConfigError) as exc:
            parse_scenario_text(text)
        assert exc.value.path == "attacks[0].rate"

    def test_unknown_key_is_error(self):
        with pytest.raises(ConfigError) as exc:
            parse_scenario_text(MINIMAL + "run.durration_s = 5\n")
        assert "durration" in exc.value.path

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            parse_scenario_text(MINIMAL + "network.latency = 3\n")

    def test_unknown_device(self):
        with pytest.raises(ConfigError) as exc:
            parse_scenario_text(MINIMAL + "device.plc3.capacity = 5\n")
        assert "plc3" in str(exc.value)

    def test_unknown_attack_key(self):
        with pytest.raises(ConfigError) as exc:
            parse_scenario_text(MINIMAL + "[attacks]\nname = f\nspeed = 9\n")
        assert exc.value.path == "attacks[0].speed"

    def test_missing_ruleset_file(self):
        text = MINIMAL + "idps.enabled = true\nidps.ruleset = nowhere.rules\n"
        with pytest.raises(ConfigError) as exc:
            parse_scenario_text(text, base_dir="/tmp")
        assert exc.value.path == "idps.ruleset"

    def test_start_after_stop(self):
        text = MINIMAL + "[attacks]\nname = f\nkind = udp_flood\nrate = 10\nstart_s = 2\nstop_s = 1\n"
        with pytest.raises(ConfigError):
            parse_scenario_text(text)

    def test_duplicate_attack_names(self):
        block = "[attacks]\nname = f\nkind = udp_flood\nrate = 10\nstart_s = 1\nstop_s = 2\n"
        with pytest.raises(ConfigError):
            parse_scenario_text(MINIMAL + block + block)

    def test_spoof_needs_times(self):
        text = MINIMAL + "[attacks]\nname = s\nkind = spoof_publish\n"
        with pytest.raises(ConfigError) as exc:
            parse_scenario_text(text)
        assert exc.value.path == "attacks[0].at_s"

    def test_bad_boolean(self):
        with pytest.raises(ConfigError):
            parse_scenario_text(MINIMAL + "idps.enabled = maybe\n")

    def test_zero_duration(self):
        with pytest.raises(ConfigError):
            parse_scenario_text("run.seed = 1\nrun.duration_s = 0\n")

    def test_unknown_attack_lookup(self):
        cfg = parse_scenario_text(MINIMAL)
        with pytest.raises(ConfigError):
            cfg.with_attack_rate("ghost", 1)


class TestTcpProbe:
    def test_probe_fields(self):
        text = (MINIMAL + "tcp_probe.enabled = true\ntcp_probe.server_port = 61500\n"
                "tcp_probe.connect_at_s = 4.5, 9.5\n")
        cfg = parse_scenario_text(text)
        assert cfg.tcp_probe.enabled
        assert cfg.tcp_probe.connect_at_s == (4.5, 9.5)
