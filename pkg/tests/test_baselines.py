import numpy as np
import pytest

from hiddenmac.baselines import (CW_MAX, CW_MIN, CsmaAgent, RtsCtsSim,
                                 run_csma, run_rtscts)
from hiddenmac.medium import Medium, SimConfig
from hiddenmac.metrics import pcr, throughput, throughputs
from hiddenmac.topology import parse_topology

ALL_TOPOLOGIES = ["{A,B}", "{A|B}", "{A,B,C}", "{A,B|C}", "{A,B|B,C}",
                  "{A,B,C,D}", "{A,B,C|D}", "{A,B|B,C|D}"]


class StubRng:
    """Deterministic replacement for numpy Generator.integers."""

    def __init__(self, values):
        self._values = list(values)

    def integers(self, lo, hi):
        return self._values.pop(0) if self._values else 0


def make_agent(backoff, difs=1):
    agent = CsmaAgent(StubRng([backoff]), difs=difs)
    agent.begin_episode(warm_idle=difs)
    return agent


def test_initial_backoff_range():
    draws = {CsmaAgent(np.random.default_rng(s)).state.backoff
             for s in range(200)}
    assert draws == {0, 1, 2}      # U[0, CW_MIN] inclusive


def test_first_transmit_after_backoff_countdown():
    for b in (0, 1, 2):
        agent = make_agent(b)
        slots = []
        for t in range(5):
            a = agent.act(mid_packet=False)
            slots.append(a)
            agent.observe(a, None if a else 0, False, None)
        assert slots.index(1) == b


def test_cold_start_waits_for_difs():
    agent = make_agent(0, difs=2)
    agent.begin_episode(warm_idle=0)
    slots = []
    for _ in range(4):
        a = agent.act(mid_packet=False)
        slots.append(a)
        agent.observe(a, None if a else 0, False, None)
    assert slots == [0, 0, 1, 0]


def test_window_doubles_per_failure_and_saturates():
    agent = CsmaAgent(np.random.default_rng(0))
    seen = []
    for _ in range(7):
        agent.observe(1, None, False, "nack")
        seen.append(agent.state.cw)
        assert 0 <= agent.state.backoff <= agent.state.cw
    assert seen == [4, 8, 16, 32, 64, 128, 128]
    assert agent.state.cw == CW_MAX


def test_success_resets_window_only():
    agent = make_agent(0)
    agent.observe(1, None, False, "nack")
    agent.state.backoff = 3
    agent.observe(1, None, True, "ack")
    assert agent.state.cw == CW_MIN
    assert agent.state.backoff == 3   # counter is left alone


def test_backoff_frozen_while_busy():
    agent = make_agent(3)
    for _ in range(5):
        agent.observe(0, 1, False, None)   # sensed busy
        assert agent.act(mid_packet=False) == 0
    assert agent.state.backoff == 3
    # one idle slot satisfies DIFS again; counter resumes
    agent.observe(0, 0, False, None)
    agent.act(mid_packet=False)
    assert agent.state.backoff == 2


def test_mid_packet_commitment():
    agent = make_agent(2)
    assert agent.act(mid_packet=True) == 1
    assert agent.state.backoff == 2


def test_distinct_draws_first_access_clean():
    topo = parse_topology("{A,B}")
    cfg = SimConfig(packet_len=5, difs=1)
    agents = [make_agent(0), make_agent(1)]
    medium = Medium(topo, cfg, initial_idle_streak=cfg.difs)
    record = None
    first = None
    for _ in range(12):
        if record is not None:
            fb = {e.terminal: e.kind for e in record.feedback}
            for n, a in enumerate(agents):
                a.observe(record.actions[n], record.senses[n],
                          any(e.kind == "ack" for e in record.feedback),
                          fb.get(n))
        record = medium.step([a.act(medium.mid_packet(n))
                              for n, a in enumerate(agents)])
        if record.feedback and first is None:
            first = record.feedback[0]
    assert first.kind == "ack" and first.terminal == 0
    assert first.packet_start == 0


def test_lone_csma_cycle():
    topo = parse_topology("{A}")
    cfg = SimConfig(packet_len=5, difs=1)
    medium = run_csma(topo, cfg, slots=1200, seed=3)
    thr = throughput(medium.ledger, 0, 0, 1200, 5)
    assert 0.82 < thr <= 5.0 / 6.0 + 1e-9
    assert pcr(medium.ledger) == 0.0
    starts = [p.start for p in medium.ledger.packets]
    assert all(b - a == 6 for a, b in zip(starts, starts[1:]))


def test_csma_deterministic_per_seed():
    topo = parse_topology("{A,B|C}")
    cfg = SimConfig()
    a = run_csma(topo, cfg, slots=2000, seed=11)
    b = run_csma(topo, cfg, slots=2000, seed=11)
    assert [(p.terminal, p.start, p.success) for p in a.ledger.packets] == \
           [(p.terminal, p.start, p.success) for p in b.ledger.packets]


def test_hidden_pair_csma_collides():
    topo = parse_topology("{A|B}")
    cfg = SimConfig()
    hidden = run_csma(topo, cfg, slots=5000, seed=0)
    connected = run_csma(parse_topology("{A,B}"), cfg, slots=5000, seed=0)
    assert pcr(hidden.ledger) > 0.1
    assert pcr(hidden.ledger) > pcr(connected.ledger)


# ---------------------------------------------------------------------------
# RTS/CTS


def lone_rtscts_sim():
    topo = parse_topology("{A}")
    cfg = SimConfig(packet_len=5, difs=1)
    sim = RtsCtsSim(topo, cfg, seed=0)
    sim.states[0].backoff = 0      # pin the initial draw
    return sim


def test_lone_rtscts_exact_cycle():
    sim = lone_rtscts_sim().run(80)
    # RTS + CTS + D data slots + DIFS: an 8-slot cycle
    starts = [p.start for p in sim.ledger.packets]
    assert starts[0] == 2
    assert all(b - a == 8 for a, b in zip(starts, starts[1:]))
    assert throughput(sim.ledger, 0, 0, 80, 5) == pytest.approx(5.0 / 8.0)


def test_lone_rtscts_zero_collisions():
    sim = lone_rtscts_sim().run(400)
    assert pcr(sim.ledger) == 0.0


@pytest.mark.parametrize("spec", ALL_TOPOLOGIES)
def test_rtscts_data_never_collides(spec):
    topo = parse_topology(spec)
    cfg = SimConfig()
    sim = run_rtscts(topo, cfg, slots=4000, seed=1)
    packets = sim.ledger.packets
    assert packets, spec
    assert all(p.success for p in packets)
    intervals = sorted((p.start, p.end) for p in packets)
    for (s0, e0), (s1, e1) in zip(intervals, intervals[1:]):
        assert s1 > e0, spec    # data windows are pairwise disjoint


def test_simultaneous_rts_costs_one_slot():
    topo = parse_topology("{A|B}")
    cfg = SimConfig(packet_len=5, difs=1)
    sim = RtsCtsSim(topo, cfg, seed=0)
    for st in sim.states:
        st.backoff = 0
    sim.run(3)
    assert sim.rts_slots[0] == (0, (0, 1))
    # both lose exactly one RTS slot, double their windows, and redraw
    assert sim.ledger.failures == 2
    assert all(st.cw == 2 * CW_MIN for st in sim.states)
    assert not sim.ledger.packets    # no data was ever on the air


def test_hidden_pair_rtscts_recovers_throughput():
    topo = parse_topology("{A|B}")
    cfg = SimConfig()
    sim = run_rtscts(topo, cfg, slots=10000, seed=2)
    total = sum(throughputs(sim.ledger, 0, 10000, cfg.packet_len))
    assert total > 0.45
    assert pcr(sim.ledger) < 0.7


def test_rtscts_deterministic_per_seed():
    topo = parse_topology("{A,B|B,C}")
    cfg = SimConfig()
    a = run_rtscts(topo, cfg, slots=3000, seed=5)
    b = run_rtscts(topo, cfg, slots=3000, seed=5)
    assert [(p.terminal, p.start) for p in a.ledger.packets] == \
           [(p.terminal, p.start) for p in b.ledger.packets]
