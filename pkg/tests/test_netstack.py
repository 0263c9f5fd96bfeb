from mcnet_sim.engine import Engine
from mcnet_sim.middleware import META_SKB_PRIORITY, META_TOPIC
from mcnet_sim.nic import Nic, NicConfig
from mcnet_sim.packet import IPERF_PORT, RTPS_PORT, FilterRule, FilterTable, Frame, TrafficClass
from mcnet_sim.netstack import NetStack, StackConfig, XskConfig


def host(fastpath=False, ring=2048, nic_cap=256, filters=None, mqprio=False, trace=None,
         seed=0, **stack_kw):
    eng = Engine(seed)
    filters = filters if filters is not None else FilterTable.real_time()
    nic = Nic(eng, "a", NicConfig(queue_capacity=nic_cap, filter_table=filters, irq_latency_ns=0))
    peer = Nic(eng, "b", NicConfig())
    nic.peer, peer.peer = peer, nic
    stack = NetStack(eng, "A", StackConfig(mqprio=mqprio, **stack_kw), nic, fastpath=fastpath,
                     xsk=XskConfig(ring_size=ring), cost_trace=trace)
    delivered = []
    stack.bind(RTPS_PORT, lambda f, wake: delivered.append((eng.now, f)))
    return eng, stack, nic, delivered


def rt(seq=0, payload=1024, flow=1, rtps=True):
    f = Frame(flow, seq, TrafficClass.REAL_TIME, 5, payload, is_rtps=rtps, dst_port=RTPS_PORT,
              topic="RTTPing")
    f.ts_app_send = 0
    return f


def be(seq=0, flow=100, payload=1024):
    f = Frame(flow, seq, TrafficClass.BEST_EFFORT, 0, payload, dst_port=IPERF_PORT)
    f.ts_app_send = 0
    return f


def at(eng, t, fn):
    eng.schedule(t, "t", "x", lambda _: fn())


def test_fast_path_doorbell_and_no_qdisc():
    eng, stack, nic, _ = host(fastpath=True)
    f = rt()
    at(eng, 0, lambda: stack.xdp_tx(f))
    eng.run_until(10**6)
    assert f.ts_nic_tx_enq - f.ts_app_send == 500
    assert f.tx_queue == 0
    assert all(len(q) == 0 for q in stack.qdiscs)
    assert stack.xsk.completed == 1 and stack.xsk.tx_in_use == 0


def test_tx_ring_of_one_drops_second_publish():
    eng, stack, nic, _ = host(fastpath=True, ring=1)
    at(eng, 0, lambda: (stack.xdp_tx(rt(0)), stack.xdp_tx(rt(1))))
    eng.run_until(10**6)
    assert stack.drops == {"xsk_tx_ring": 1}
    assert nic.wire_tx == 1


def test_fast_path_rx_is_zero_copy():
    trace = []
    eng, stack, nic, delivered = host(fastpath=True, trace=trace)
    f = rt()
    at(eng, 0, lambda: nic.rx_deliver(f))
    eng.run_until(10**6)
    assert delivered and delivered[0][1] is f and f.via_xsk
    stages = {s for fid, s, _ in trace if fid == f.frame_id}
    assert "copy" not in stages and "softirq" not in stages
    assert delivered[0][0] == f.ts_nic_rx


def test_fill_ring_exhaustion_drops():
    eng, stack, nic, delivered = host(fastpath=True, ring=1)
    at(eng, 0, lambda: (nic.rx_deliver(rt(0)), nic.rx_deliver(rt(1))))
    eng.run_until(10**6)
    assert stack.drops == {"xsk_fill_ring": 1} and len(delivered) == 1


def test_non_rtps_frame_on_rx0_takes_stack():
    eng, stack, nic, delivered = host(fastpath=True)
    f = rt(rtps=False)
    at(eng, 0, lambda: nic.rx_deliver(f))
    eng.run_until(10**6)
    assert f.rx_queue == 0 and not f.via_xsk
    assert stack.stack_rx_frames == 1 and stack.xsk_rx_frames == 0
    cfg = stack.cfg
    assert delivered[0][0] == f.ts_nic_rx + cfg.softirq_ns + stack.copy_cost(f.payload_len)


def test_closed_port_drop():
    eng, stack, nic, _ = host()
    f = be()
    f.dst_port = 9
    at(eng, 0, lambda: nic.rx_deliver(f))
    eng.run_until(10**6)
    assert stack.drops == {"closed_port": 1}


def test_rt_frame_behind_100_best_effort_frames():
    one_queue = FilterTable((FilterRule(0, 1), FilterRule(5, 1)))
    eng, stack, nic, delivered = host(filters=one_queue, contention_per_inflight_ns=0)
    stack.bind_sink(IPERF_PORT)
    f = rt()
    at(eng, 0, lambda: ([nic.rx_deliver(be(i)) for i in range(100)], nic.rx_deliver(f)))
    eng.run_until(10**7)
    assert f.rx_queue == 1
    assert delivered[0][0] >= 101 * stack.cfg.softirq_ns


def test_rt_frame_alone_on_rx0_served_at_next_interrupt():
    eng, stack, nic, delivered = host(fastpath=True)
    stack.bind_sink(IPERF_PORT)
    f = rt()
    at(eng, 1_000, lambda: nic.rx_deliver(f))
    eng.run_until(10**6)
    assert delivered[0][0] == 1_000


def test_contention_zero_when_idle():
    eng, stack, nic, _ = host()
    assert stack.contention_delay() == 0


def fill_qdisc(stack, n):
    for i in range(n + 2):
        stack._qdisc_enqueue(be(i, flow=100))


def test_contention_grows_with_backlog():
    eng, stack, nic, _ = host(nic_cap=1)
    fill_qdisc(stack, 50)
    assert stack.be_inflight() == 50
    assert stack.contention_delay() >= 50 * 200


def test_contention_is_reproducible():
    vals = []
    for _ in range(2):
        eng, stack, nic, _ = host(nic_cap=1, seed=42)
        fill_qdisc(stack, 50)
        vals.append([stack.contention_delay() for _ in range(5)])
    assert vals[0] == vals[1]


def test_meta_frame_goes_to_tx0_with_mqprio():
    eng, stack, nic, _ = host(mqprio=True)
    meta = Frame(3, 0, TrafficClass.BEST_EFFORT, 0, 256, is_rtps=True, topic=META_TOPIC,
                 skb_priority=META_SKB_PRIORITY)
    assert stack.tx_queue_for(meta) == 0
    assert {stack.tx_queue_for(be(flow=f)) for f in range(100, 150)} == {1, 2, 3}


def test_qdisc_overflow_tail_drops():
    eng, stack, nic, _ = host(nic_cap=1, qdisc="pfifo", qdisc_capacity=1000)
    fill_qdisc(stack, 1001)
    assert stack.drops == {"qdisc": 1}


def test_stack_conservation():
    eng, stack, nic, _ = host()
    stack.bind_sink(IPERF_PORT)
    for i in range(300):
        at(eng, i * 1_000, lambda i=i: stack.stack_tx(be(i, flow=100 + i % 7)))
        at(eng, i * 1_000, lambda i=i: nic.rx_deliver(be(i, flow=200 + i % 5)))
    eng.run_until(150_000)
    stack.settle()
    total_in = stack.tx_submitted + nic.wire_rx
    out = nic.wire_tx + stack.app_delivered + stack.dropped + sum(nic.rx_drops)
    assert total_in == out + stack.frames_in_flight()
