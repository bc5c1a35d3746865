"""Classical agents: CSMA/CA with binary exponential backoff and its RTS/CTS variant.

Both expose the same per-slot surface as the learned agents: observe the
previous slot, then emit a transmit intent.  The RTS/CTS handshake needs extra
channel machinery (1-slot control frames, AP broadcast grants, NAV), so it
runs under its own simulation loop instead of the plain Medium.
"""

from __future__ import annotations

from dataclasses import dataclass

from .medium import FeedbackEvent, SimConfig, TransmissionLedger
from .topology import TopologyGraph

CW_MIN = 2
CW_MAX = 128


@dataclass
class CsmaState:
    cw: int = CW_MIN
    backoff: int = 0
    idle_streak: int = 0

    def on_failure(self, rng):
        self.cw = min(2 * self.cw, CW_MAX)
        self.backoff = int(rng.integers(0, self.cw + 1))

    def on_success(self, rng):
        # the counter is left alone: a winner keeps the channel until a
        # contender's frozen counter (ticking once per DIFS gap) hits zero
        # and forces a collision, giving the bursty capture cycles seen in
        # saturated BEB networks
        self.cw = CW_MIN


class CsmaAgent:
    """Listen-before-talk with binary exponential backoff.

    The backoff counter freezes whenever the sensed channel is busy; it
    decrements only once the channel has been idle for at least a DIFS.  A
    fresh backoff is drawn on every failure (doubling the window, capped); a
    success resets the window to its minimum.
    """

    def __init__(self, rng, difs=1, cw_min=CW_MIN):
        self.rng = rng
        self.difs = difs
        self.state = CsmaState(cw=cw_min)
        self.state.backoff = int(rng.integers(0, self.state.cw + 1))

    def begin_episode(self, warm_idle=0):
        self.state.idle_streak = warm_idle

    def observe(self, own_action, sense, ack, own_feedback):
        if own_feedback == "nack":
            self.state.on_failure(self.rng)
        elif own_feedback == "ack":
            self.state.on_success(self.rng)
        if own_action:
            self.state.idle_streak = 0
        elif sense == 1:
            self.state.idle_streak = 0
        else:
            self.state.idle_streak += 1

    def act(self, mid_packet):
        if mid_packet:
            return 1
        if self.state.idle_streak >= self.difs:
            if self.state.backoff == 0:
                return 1
            self.state.backoff -= 1
        return 0


def run_csma(topo: TopologyGraph, cfg: SimConfig, slots, seed,
             warm_idle=None, medium_cls=None):
    """Simulate a homogeneous CSMA/CA BSS for ``slots`` slots; returns the medium."""
    import numpy as np
    from .medium import Medium

    rng = np.random.default_rng(seed)
    agents = [CsmaAgent(rng, difs=cfg.difs) for _ in range(topo.n)]
    warm = cfg.lookback if warm_idle is None else warm_idle
    medium = Medium(topo, cfg, initial_idle_streak=warm)
    for a in agents:
        a.begin_episode(warm_idle=warm)
    record = None
    for _ in range(slots):
        if record is not None:
            fb = {e.terminal: e.kind for e in record.feedback}
            for n, a in enumerate(agents):
                a.observe(record.actions[n], record.senses[n],
                          any(e.kind == "ack" for e in record.feedback),
                          fb.get(n))
        intents = [a.act(medium.mid_packet(n)) for n, a in enumerate(agents)]
        record = medium.step(intents)
    return medium


# ---------------------------------------------------------------------------
# RTS/CTS


@dataclass
class RtsCtsState(CsmaState):
    nav_until: int = -1          # slot index up to which the NAV blocks access
    awaiting_cts: bool = False


class RtsCtsSim:
    """Slotted RTS/CTS handshake around the same LBT + BEB core.

    One slot per RTS and per CTS, with the CTS immediately following a lone
    RTS; data follows the CTS with no gap and never collides (every terminal
    receives the AP's CTS broadcast and defers for the data duration).  RTS
    collisions cost a single slot and trigger the usual window doubling.
    """

    def __init__(self, topo: TopologyGraph, cfg: SimConfig, seed,
                 warm_idle=None):
        import numpy as np

        self.topo = topo
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        n = topo.n
        self.oh = [sorted(topo.oh_indices(i)) for i in range(n)]
        self.states = [RtsCtsState() for _ in range(n)]
        for s in self.states:
            s.backoff = int(self.rng.integers(0, s.cw + 1))
            s.idle_streak = cfg.lookback if warm_idle is None else warm_idle
        self.ledger = TransmissionLedger(n)
        self.slot = 0
        self.data_remaining = [0] * n
        self.data_start = [None] * n
        self.cts_winner = None       # terminal granted a CTS in this slot
        self.pending_rts = []        # RTS senders from the previous slot
        self.feedback = []
        self.rts_slots = []          # (slot, senders) for trace inspection

    def step(self):
        n = self.topo.n
        cfg = self.cfg
        slot = self.slot
        grant = self.cts_winner      # AP transmits the CTS during this slot
        self.cts_winner = None
        transmitters = []
        rts_senders = []
        for i in range(n):
            st = self.states[i]
            if self.data_remaining[i] > 0:
                transmitters.append(i)
                continue
            if grant == i:
                # CTS addressed to us: data starts next slot.
                continue
            if st.awaiting_cts:
                # No CTS arrived for our RTS: treat as a collision loss.
                st.awaiting_cts = False
                self.ledger.failures += 1
                st.on_failure(self.rng)
                continue
            if slot <= st.nav_until:
                continue
            if st.idle_streak >= cfg.difs:
                if st.backoff == 0:
                    transmitters.append(i)
                    rts_senders.append(i)
                    self.ledger.attempts += 1
                else:
                    st.backoff -= 1
        if grant is not None:
            # NAV: everyone but the granted terminal defers for the data window.
            for i in range(n):
                if i != grant:
                    self.states[i].nav_until = slot + cfg.packet_len
            self.data_remaining[grant] = cfg.packet_len
            self.data_start[grant] = slot + 1
            self.states[grant].awaiting_cts = False
        if rts_senders:
            self.rts_slots.append((slot, tuple(rts_senders)))
        # RTS outcome: a lone RTS in a slot with no other transmission and no
        # concurrent CTS is answered next slot.
        if len(rts_senders) == 1 and len(transmitters) == 1 and grant is None:
            winner = rts_senders[0]
            self.cts_winner = winner
            self.states[winner].awaiting_cts = True
        else:
            for i in rts_senders:
                self.states[i].awaiting_cts = True  # resolved next slot (no CTS)
        # Carrier sensing: the AP's CTS is audible to everyone.
        for i in range(n):
            if self.data_remaining[i] > 0 or i in rts_senders:
                self.states[i].idle_streak = 0
                continue
            busy = grant is not None or any(m in transmitters for m in self.oh[i])
            self.states[i].idle_streak = 0 if busy else self.states[i].idle_streak + 1
        # Advance data transmissions; data never collides under the NAV rule.
        for i in range(n):
            if self.data_start[i] is not None and self.data_start[i] > slot:
                continue  # granted this slot, data begins next slot
            if self.data_remaining[i] > 0:
                self.data_remaining[i] -= 1
                if self.data_remaining[i] == 0:
                    start = self.data_start[i]
                    self.ledger.attempts += 1
                    self.ledger.record_end(i, start, slot, True)
                    self.feedback.append(FeedbackEvent(slot, "ack", i, start))
                    self.states[i].on_success(self.rng)
                    self.data_start[i] = None
        self.slot += 1

    def run(self, slots):
        for _ in range(slots):
            self.step()
        return self


def run_rtscts(topo, cfg, slots, seed, warm_idle=None):
    return RtsCtsSim(topo, cfg, seed, warm_idle=warm_idle).run(slots)
