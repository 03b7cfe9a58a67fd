"""Rule parsing, matching, engine saturation, lifecycle, alert polling."""

import random


import pytest

from fbsecsim.errors import RuleSyntaxError
from fbsecsim.fbnet import FBNetwork, Scheduler, Trace
from fbsecsim.idps import (
    Action,
    EngineMode,
    IdpsEngine,
    STATUS_FAULT,
    STATUS_RUNNING,
    STATUS_STOPPED,
    make_alertcheck,
    make_idps_cfb,
    make_idps_sifb,
    match_packet,
    parse_params,
    parse_rules,
)
from fbsecsim.transport import PacketView, Proto, ip_to_int
from fbsecsim.values import Int, Str

US = 1_000_000


def view(proto=Proto.UDP, src="10.0.0.66", sport=40000, dst="239.192.0.2",
         dport=61499, payload=b"\x41"):
    return PacketView(proto, ip_to_int(src), sport, ip_to_int(dst), dport, payload)


class TestParse:
    def test_flood_rule_fields(self):
        rules = parse_rules('alert udp any any -> any 61499 rate 100/1 msg "udp flood"\n')
        assert len(rules) == 1
        r = rules[0]
        assert r.action is Action.ALERT
        assert r.protos == frozenset({Proto.UDP})
        assert r.src_addr is None and r.src_port is None and r.dst_addr is None
        assert r.dst_port.lo == r.dst_port.hi == 61499
        assert r.rate.threshold == 100 and r.rate.window_us == US
        assert r.msg == "udp flood"

    def test_empty_file_is_legal(self):
        assert parse_rules("") == []
        assert parse_rules("# only comments\n\n") == []

    def test_block_without_matchers_rejected(self):
        with pytest.raises(RuleSyntaxError):
            parse_rules('block any any any -> any any msg "blackhole"')

    def test_malformed_block_any_line(self):
        with pytest.raises(RuleSyntaxError) as exc:
            parse_rules("block any")
        assert exc.value.line == 1

    def test_alert_without_matchers_is_fine(self):
        rules = parse_rules('alert any any any -> any any msg "log all"')
        assert rules[0].action is Action.ALERT

    @pytest.mark.parametrize("line", [
        'drop udp any any -> any any msg "x"',
        'alert quic any any -> any any msg "x"',
        'alert udp any any any any msg "x"',
        'alert udp any any -> any any rate 0/1 msg "x"',
        'alert udp any any -> any any rate 5/0 msg "x"',
        'alert udp any any -> any any bogus msg "x"',
        'alert udp any any -> any any msg "x" trailing',
        'alert udp 1.2.3 any -> any any msg "x"',
        'alert udp any 99999 -> any any msg "x"',
        "alert udp any any -> any any",
    ])
    def test_syntax_errors(self, line):
        with pytest.raises(RuleSyntaxError):
            parse_rules(line)

    def test_line_numbers_reported(self):
        text = '# comment\nalert udp any any -> any any msg "ok"\nbad line here\n'
        with pytest.raises(RuleSyntaxError) as exc:
            parse_rules(text)
        assert exc.value.line == 3

    def test_cidr_and_port_range(self):
        r = parse_rules('alert tcp 192.168.1.0/24 1024:2048 -> any any msg "x"')[0]
        assert r.src_addr.matches(ip_to_int("192.168.1.77"))
        assert not r.src_addr.matches(ip_to_int("192.168.2.1"))
        assert r.src_port.matches(1500) and not r.src_port.matches(80)

    def test_ids_assigned_in_file_order(self):
        text = ('alert udp any any -> any 1 msg "a"\n'
                'alert udp any any -> any 2 msg "b"\n')
        assert [r.id for r in parse_rules(text)] == ["r1", "r2"]


class TestMatch:
    def test_dst_port_match(self):
        r = parse_rules('alert udp any any -> any 61499 msg "x"')[0]
        assert match_packet(r, view(), {}, 0)
        assert not match_packet(r, view(dport=80), {}, 0)

    def test_proto_families(self):
        r = parse_rules('alert tcp any any -> any any msg "x"')[0]
        for p in (Proto.TCP_SYN, Proto.TCP_ACK, Proto.TCP_DATA, Proto.TCP_SYNACK):
            assert match_packet(r, view(proto=p), {}, 0)
        assert not match_packet(r, view(proto=Proto.UDP), {}, 0)

    def test_payload_substring(self):
        r = parse_rules('alert udp any any -> any any payload "41" msg "x"')[0]
        assert match_packet(r, view(payload=b"\x41"), {}, 0)
        assert not match_packet(r, view(payload=b"\x40"), {}, 0)
        assert match_packet(r, view(payload=b"\x00\x41\x00"), {}, 0)

    def test_srcallow_excludes_listed_sources(self):
        r = parse_rules('block udp any any -> 239.192.0.2 61499 '
                        'srcallow 192.168.1.1 msg "x"')[0]
        assert match_packet(r, view(src="10.0.0.66"), {}, 0)
        assert not match_packet(r, view(src="192.168.1.1"), {}, 0)

    def test_rate_threshold_boundary(self):
        """Packets 1..100 inside the window do not match; packet 101 does."""
        r = parse_rules('alert udp any any -> any 61499 rate 100/1 msg "x"')[0]
        counters = {}
        results = [match_packet(r, view(), counters, t * 1000) for t in range(101)]
        assert results[:100] == [False] * 100
        assert results[100] is True

    def test_rate_window_slides(self):
        r = parse_rules('alert udp any any -> any any rate 2/1 msg "x"')[0]
        counters = {}
        assert not match_packet(r, view(), counters, 0)
        assert not match_packet(r, view(), counters, 100)
        assert match_packet(r, view(), counters, 200)          # 3 within 1 s
        assert not match_packet(r, view(), counters, 2 * US)   # old ones aged out

    def test_rate_keyed_by_claimed_source(self):
        r = parse_rules('alert udp any any -> any any rate 1/1 msg "x"')[0]
        counters = {}
        assert not match_packet(r, view(src="10.0.0.1"), counters, 0)
        assert not match_packet(r, view(src="10.0.0.2"), counters, 1)  # separate window
        assert match_packet(r, view(src="10.0.0.1"), counters, 2)

    def test_rate_against_bruteforce_oracle(self):
        """Exact agreement with a naive full-history sliding window count."""
        r = parse_rules('alert udp any any -> any any rate 7/2 msg "x"')[0]
        rng = random.Random(99)
        counters = {}
        history = []
        t = 0
        for _ in range(2000):
            t += rng.randrange(1, 400_000)
            history.append(t)
            expected = sum(1 for h in history if h > t - 2 * US) > 7
            assert match_packet(r, view(), counters, t) == expected


class TestEngine:
    def started(self, text, mode=EngineMode.IPS, capacity=5_000):
        eng = IdpsEngine(inspection_capacity=capacity)
        eng.start(parse_rules(text), mode)
        return eng

    def test_off_mode_passes_and_counts_nothing(self):
        eng = IdpsEngine()
        eng.start([], EngineMode.OFF)
        v = eng.inspect(view(), 0)
        assert not v.blocked and eng.presented == 0

    def test_block_in_ips_vs_ids(self):
        rule = 'block udp any any -> any 61499 msg "x"'
        ips = self.started(rule, EngineMode.IPS)
        assert ips.inspect(view(), 0).blocked
        ids = self.started(rule, EngineMode.IDS)
        v = ids.inspect(view(), 0)
        assert not v.blocked and len(ids.alerts) == 1

    def test_first_match_wins(self):
        text = ('alert udp any any -> any 61499 msg "first"\n'
                'block udp any any -> any any msg "second"\n')
        eng = self.started(text, EngineMode.IPS)
        v = eng.inspect(view(), 0)
        assert not v.blocked and v.rule_id == "r1"
        assert eng.alerts[0].msg == "first"

    def test_saturation_fraction_exact(self):
        """capacity 5k, offered 20k/s for 2 s: 10k inspected, 0.75 uninspected."""
        eng = self.started('alert udp any any -> any any rate 100/1 msg "x"',
                           EngineMode.IDS, capacity=5_000)
        interval = US // 20_000
        t = 0
        while t < 2 * US:
            eng.inspect(view(), t)
            t += interval
        assert eng.presented == 40_000
        assert eng.inspected == 10_000
        assert eng.dropped_by_engine == 30_000
        assert eng.dropped_by_engine / eng.presented == 0.75

    def test_accounting_identity(self):
        eng = self.started("", EngineMode.IDS, capacity=100)
        rng = random.Random(4)
        t = 0
        for _ in range(5_000):
            t += rng.randrange(1, 30_000)
            eng.inspect(view(), t)
        assert eng.presented == eng.inspected + eng.dropped_by_engine

    def test_saturation_undercounts_alerts(self):
        """Alert log falls short of the true match count once saturated."""
        from fbsecsim.metrics import TruthOracle
        rules = parse_rules('alert udp any any -> any any rate 100/1 msg "x"')
        eng = IdpsEngine(inspection_capacity=1_000)
        eng.start(rules, EngineMode.IDS)
        oracle = TruthOracle(parse_rules('alert udp any any -> any any rate 100/1 msg "x"'))
        interval = US // 10_000
        t = 0
        while t < 2 * US:
            eng.inspect(view(), t)
            oracle.observe(view(), t)
            t += interval
        assert len(eng.alerts) < oracle.true_matches

    def test_alert_seq_monotone(self):
        eng = self.started('alert udp any any -> any any msg "x"', EngineMode.IDS)
        seqs = []
        for t in range(10):
            eng.inspect(view(), t)
            seqs.append(eng.alert_seq)
        assert seqs == sorted(seqs) and seqs[-1] == 10

    def test_ids_transparency(self):
        """IDS mode must not change which packets get through."""
        rule = 'block udp any any -> any any rate 3/1 msg "x"'
        outcomes = {}
        for mode in (EngineMode.OFF, EngineMode.IDS):
            eng = IdpsEngine(inspection_capacity=10)
            eng.start(parse_rules(rule), mode)
            passed = []
            for t in range(0, 40_000, 1_000):
                v = eng.inspect(view(), t)
                if not v.blocked:
                    passed.append(t)
            outcomes[mode] = passed
        assert outcomes[EngineMode.OFF] == outcomes[EngineMode.IDS]


class TestParams:
    def test_parse_params(self):
        mode, path = parse_params(b"mode=ips;rules=/tmp/x.rules")
        assert mode is EngineMode.IPS and path == "/tmp/x.rules"

    @pytest.mark.parametrize("raw", [b"mode=warp;rules=x", b"rules=x", b"junk", b"mode=ids;color=red"])
    def test_bad_params(self, raw):
        with pytest.raises(ValueError):
            parse_params(raw)


def sifb_net(rules_text="alert udp any any -> any any msg \"x\"", params=None):
    sched = Scheduler()
    net = FBNetwork(sched, Trace(enabled=True))
    engine = IdpsEngine()
    sifb = make_idps_sifb("SIFB", engine, read_rules=lambda path: rules_text)
    net.add(sifb)
    net.set_data_in("SIFB", "PARAMS", Str(params or b"mode=ips;rules=mem"))
    return net, sched, engine, sifb


class TestLifecycle:
    def test_init_starts_engine(self):
        net, sched, engine, sifb = sifb_net()
        net.dispatch("SIFB", "INIT")
        assert sifb.state == STATUS_RUNNING
        assert engine.running and engine.mode is EngineMode.IPS
        assert net.data_out("SIFB", "STATUS").raw == STATUS_RUNNING
        emitted = [e for e in net.trace.entries if e[0] == "emit" and e[3] == "INITO"]
        assert len(emitted) == 1

    def test_bad_ruleset_faults_and_fails_open(self):
        net, sched, engine, sifb = sifb_net(rules_text="complete garbage")
        net.dispatch("SIFB", "INIT")
        assert sifb.state == STATUS_FAULT
        assert not engine.running
        v = engine.inspect(view(), 0)
        assert not v.blocked and engine.presented == 0  # everything passes

    def test_double_init_ignored(self):
        net, sched, engine, sifb = sifb_net()
        net.dispatch("SIFB", "INIT")
        net.dispatch("SIFB", "INIT")
        assert sifb.state == STATUS_RUNNING
        assert net.data_out("SIFB", "QO").raw is False

    def test_stop_freezes_and_restart_resets(self):
        net, sched, engine, sifb = sifb_net()
        net.dispatch("SIFB", "INIT")
        engine.inspect(view(), 0)
        assert len(engine.alerts) == 1
        net.dispatch("SIFB", "STOP")
        assert sifb.state == STATUS_STOPPED and not engine.running
        engine.inspect(view(), 10)  # ignored while stopped
        assert engine.presented == 1
        net.dispatch("SIFB", "INIT")
        assert engine.presented == 0 and engine.alerts == []  # counters reset

    def test_stop_while_stopped_ignored(self):
        net, sched, engine, sifb = sifb_net()
        net.dispatch("SIFB", "STOP")
        assert sifb.state == STATUS_STOPPED
        assert net.data_out("SIFB", "QO").raw is False


class TestAlertCheck:
    def poll_at(self, net, times, seq_by_time):
        """Dispatch POLL at the given times, setting SEQ beforehand."""
        flags = []
        for t in times:
            net.scheduler.now = t
            net.set_data_in("AC", "SEQ", Int(seq_by_time(t)))
            net.dispatch("AC", "POLL")
            flags.append(net.data_out("AC", "QO").raw)
        return flags

    def test_hold_window_timeline(self):
        """Alert observed at t=1.0s: flag true until the poll at t=3.0s."""
        sched = Scheduler()
        net = FBNetwork(sched, Trace(enabled=False))
        net.add(make_alertcheck("AC", hold_window_us=2 * US))
        times = [t * US // 10 for t in range(0, 42)]  # polls every 100 ms
        flags = self.poll_at(net, times, lambda t: 1 if t >= US else 0)
        by_time = dict(zip(times, flags))
        assert by_time[9 * US // 10] is False
        assert by_time[US] is True                # increase seen this poll
        assert by_time[29 * US // 10] is True     # still inside the hold
        assert by_time[3 * US] is False           # hold expired exactly here

    def test_never_alerted_stays_false(self):
        sched = Scheduler()
        net = FBNetwork(sched, Trace(enabled=False))
        net.add(make_alertcheck("AC"))
        flags = self.poll_at(net, [i * 100_000 for i in range(20)], lambda t: 0)
        assert not any(flags)


class TestComposite:
    def test_cfb_exposes_flag_from_poller(self):
        sched = Scheduler()
        net = FBNetwork(sched, Trace(enabled=False))
        engine = IdpsEngine()
        cfb = make_idps_cfb(engine, read_rules=lambda p: 'alert udp any any -> any any msg "x"')
        refs = cfb.instantiate(net, "IDPS")
        sifb_id = refs["PARAMS"].rsplit(".", 1)[0]
        engine.on_alert = lambda seq: net.set_data_out(sifb_id, "ALERT_SEQ", Int(seq))
        net.set_data_in(sifb_id, "PARAMS", Str(b"mode=ids;rules=mem"))
        net.dispatch(*refs["INIT"].rsplit(".", 1))
        assert engine.running
        engine.inspect(view(), 0)
        sched.now = 100_000
        net.dispatch(*refs["POLL"].rsplit(".", 1))
        inst, port = refs["A"].rsplit(".", 1)
        assert net.data_out(inst, port).raw is True
