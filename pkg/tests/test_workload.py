from fractions import Fraction

from hypothesis import given, settings, strategies as st

from mcnet_sim.engine import NS_PER_S, NS_PER_US, Engine
from mcnet_sim.middleware import Middleware, MiddlewareConfig
from mcnet_sim.nic import Nic, NicConfig
from mcnet_sim.netstack import NetStack, StackConfig
from mcnet_sim.workload import (
    PING_TOPIC, InterferenceConfig, InterferenceGenerator, RtSender, RtWorkloadConfig,
    phase_offset,
)


class RecordingStack:
    def __init__(self, engine):
        self.engine = engine
        self.frames = []

    def stack_tx(self, frame):
        self.frames.append(frame)


def sender(duration_ns):
    eng = Engine()
    mw = Middleware(eng, "A", MiddlewareConfig(discovery_period_ns=0, liveliness_period_ns=0))
    mw.add_publisher(PING_TOPIC, 1)
    out = []
    mw.user_egress = out.append
    s = RtSender(eng, mw, RtWorkloadConfig(duration_ns=duration_ns))
    s.start()
    eng.run_until(duration_ns + NS_PER_S)
    return s, out


def test_ten_seconds_gives_20000_sends():
    assert RtWorkloadConfig(duration_ns=10 * NS_PER_S).sends == 20_000


def test_sends_are_open_loop_with_zero_app_jitter():
    s, out = sender(NS_PER_S)
    assert s.sent == len(out) == 2_000
    assert out[0].seq_no == 0
    assert [f.ts_app_send for f in out] == [k * 500 * NS_PER_US for k in range(2_000)]
    assert [f.seq_no for f in out] == list(range(2_000))


def test_interval_for_1024_bytes():
    cfg = InterferenceConfig(enabled=True, payload_len=1024)
    assert cfg.per_flow_bps == 50_000_000
    assert cfg.interval_ns == 163_840


def test_aggregate_payload_rate_matches_target():
    cfg = InterferenceConfig(enabled=True, payload_len=1024)
    assert cfg.per_flow_bps * cfg.n_flows == 2_500_000_000


def generate(cfg, until, seed=1):
    eng = Engine(seed)
    st_ = RecordingStack(eng)
    gen = InterferenceGenerator(eng, "A", st_, cfg, 100, until, seed)
    gen.start()
    eng.run_until(until)
    return gen, st_.frames


def test_disabled_interference_emits_nothing():
    gen, frames = generate(InterferenceConfig(enabled=False), NS_PER_S // 10)
    assert frames == [] and gen.emitted == 0


def test_flow_ticks_follow_the_interval():
    gen, frames = generate(InterferenceConfig(enabled=True, n_flows=1,
                                                    aggregate_target_bps=50_000_000), 2_000_000)
    times = [f.ts_app_send for f in frames]
    assert all(b - a == 163_840 for a, b in zip(times, times[1:]))


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([64, 512, 1024]), st.integers(1, 10**9))
def test_offered_payload_rate_within_one_percent(payload, seed):
    cfg = InterferenceConfig(enabled=True, payload_len=payload)
    until = NS_PER_S // 50
    gen, frames = generate(cfg, until, seed)
    rate = Fraction(gen.emitted_payload_bits * NS_PER_S, until)
    assert abs(rate - cfg.aggregate_target_bps) <= cfg.aggregate_target_bps / 100


@given(st.integers(0, 2**32), st.integers(100, 400))
def test_phase_is_a_function_of_seed_and_flow(seed, flow):
    assert phase_offset(seed, flow, 163_840) == phase_offset(seed, flow, 163_840)
    assert 0 <= phase_offset(seed, flow, 163_840) < 163_840


def test_wire_rate_within_one_percent_without_drops():
    # A tenth of the default load fits on the wire, so nothing is dropped upstream.
    eng = Engine(3)
    nic, peer = Nic(eng, "a", NicConfig()), Nic(eng, "b", NicConfig())
    nic.peer, peer.peer = peer, nic
    stack = NetStack(eng, "A", StackConfig(), nic)
    cfg = InterferenceConfig(enabled=True, n_flows=5, aggregate_target_bps=250_000_000)
    until = NS_PER_S // 5
    gen = InterferenceGenerator(eng, "A", stack, cfg, 100, until, 3)
    gen.start()
    eng.run_until(until + NS_PER_S // 100)
    assert stack.dropped == 0 and sum(nic.tx_drops) == 0
    rate = nic.be_payload_bits * NS_PER_S / until
    assert abs(rate - 250_000_000) <= 2_500_000
