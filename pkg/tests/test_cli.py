"""CLI surface: commands, exit-status taxonomy, output files."""

import csv
import os


from fbsecsim.cli import main
from fbsecsim.data import scenario_path


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


MINI_COLLAPSE = """\
run.seed = 9
run.duration_s = 3
plant.enabled = false
device.plc2.critical_rate = 5000

[attacks]
name = burst
kind = icmp_flood
target = plc2:0
rate = 10000
start_s = 1
stop_s = 2
"""


class TestRun:
    def test_clean_run_exit_zero_and_outputs(self, tmp_path, capsys):
        out = str(tmp_path / "out")
        code = main(["run", scenario_path("spoof_blocked"), "--out", out])
        assert code == 0
        for f in ("metrics.csv", "alerts.csv", "plant.csv", "transitions.csv", "trace.txt"):
            assert os.path.exists(os.path.join(out, f)), f
        assert "exit=0" in capsys.readouterr().out

    def test_hazard_exit_ten(self, tmp_path):
        assert main(["run", scenario_path("spoof_unprotected"), "--out", str(tmp_path)]) == 10

    def test_collapse_exit_eleven(self, tmp_path):
        scen = write(tmp_path, "mini.scenario", MINI_COLLAPSE)
        assert main(["run", scen, "--out", str(tmp_path / "o")]) == 11

    def test_config_error_exit_two(self, tmp_path):
        scen = write(tmp_path, "bad.scenario", "run.duration_s = 5\n")
        assert main(["run", scen, "--out", str(tmp_path / "o")]) == 2

    def test_missing_file_exit_two(self, tmp_path):
        assert main(["run", str(tmp_path / "ghost.scenario")]) == 2


class TestValidate:
    def test_ok(self, capsys):
        assert main(["validate", scenario_path("baseline")]) == 0
        assert "ok" in capsys.readouterr().out

    def test_bad(self, tmp_path):
        scen = write(tmp_path, "bad.scenario", "run.seed = 1\nrun.wat = 2\n")
        assert main(["validate", scen]) == 2


class TestRules:
    def test_check_ok(self, tmp_path, capsys):
        rules = write(tmp_path, "a.rules",
                      'alert udp any any -> any 61499 rate 100/1 msg "flood"\n')
        assert main(["rules", "check", rules]) == 0
        out = capsys.readouterr().out
        assert "1 rule(s) ok" in out and "rate 100/1s" in out

    def test_check_syntax_error(self, tmp_path):
        rules = write(tmp_path, "b.rules", "block any\n")
        assert main(["rules", "check", rules]) == 2


class TestSweep:
    MINI_SWEEP = """\
run.seed = 5
run.duration_s = 3
plant.enabled = false
device.plc2.capacity = 1000000

[attacks]
name = f
kind = udp_flood
target = plc2:61499
rate = 100
start_s = 1
stop_s = 2
"""

    def test_sweep_csv(self, tmp_path, capsys):
        scen = write(tmp_path, "s.scenario", self.MINI_SWEEP)
        out = str(tmp_path / "o")
        assert main(["sweep", scen, "--attack", "f", "--rates", "100,1000,10000",
                     "--out", out]) == 0
        with open(os.path.join(out, "sweep.csv")) as f:
            rows = list(csv.DictReader(f))
        assert [int(r["rate"]) for r in rows] == [100, 1000, 10000]
        assert [int(r["offered"]) for r in rows] == [100, 1000, 10000]

    def test_single_rate_below_capacity_drops_nothing(self, tmp_path):
        scen = write(tmp_path, "s.scenario", self.MINI_SWEEP)
        out = str(tmp_path / "o")
        assert main(["sweep", scen, "--attack", "f", "--rates", "50", "--out", out]) == 0
        with open(os.path.join(out, "sweep.csv")) as f:
            row = next(csv.DictReader(f))
        assert row["dropped_capacity"] == "0"
        assert row["dropped_by_engine"] == "0"
        assert row["device_final_state"] == "RESPONSIVE"

    def test_rates_must_increase(self, tmp_path):
        scen = write(tmp_path, "s.scenario", self.MINI_SWEEP)
        assert main(["sweep", scen, "--attack", "f", "--rates", "10,5"]) == 2

    def test_empty_rates_usage_error(self, tmp_path):
        scen = write(tmp_path, "s.scenario", self.MINI_SWEEP)
        assert main(["sweep", scen, "--attack", "f", "--rates", ""]) == 2

    def test_unknown_attack_name(self, tmp_path):
        scen = write(tmp_path, "s.scenario", self.MINI_SWEEP)
        assert main(["sweep", scen, "--attack", "ghost", "--rates", "10"]) == 2
