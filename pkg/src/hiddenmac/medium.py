"""The slotted shared channel: collision resolution, carrier sensing, LBT, AP feedback.

One Medium instance is a sequential state machine for a single simulation.
Independent simulations (different seeds) can run in parallel processes with
no shared state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .topology import TopologyGraph

MICROSECONDS_PER_SLOT = 9.0


@dataclass(frozen=True)
class SimConfig:
    slot_us: float = MICROSECONDS_PER_SLOT
    packet_len: int = 5          # D, slots per packet (TXOP commitment)
    difs: int = 1                # idle slots required before channel access
    lookback: int = 40           # W, history window visible to agents
    episode_len: int = 100       # T_e, slots per training episode
    drop_deadline_ms: float = 100.0

    def __post_init__(self):
        if self.packet_len < 1:
            raise ValueError("packet_len must be >= 1")
        if self.lookback <= self.packet_len:
            raise ValueError("lookback window must exceed the packet length")
        if self.difs < 1:
            raise ValueError("difs must be >= 1")

    @property
    def drop_deadline_slots(self):
        return int(round(self.drop_deadline_ms * 1000.0 / self.slot_us))


@dataclass(frozen=True)
class FeedbackEvent:
    """AP verdict on the packet window ending at ``slot``.

    Emitted when a window [packet_start, packet_start+D-1] completes; received
    reliably by every terminal at the start of slot ``slot + 1``.  Out of band:
    consumes no channel slots.
    """

    slot: int
    kind: str          # "ack" | "nack"
    terminal: int
    packet_start: int


@dataclass(frozen=True)
class PacketRecord:
    terminal: int
    start: int
    end: int
    success: bool


class TransmissionLedger:
    """Every packet attempt seen by the medium, with success flags."""

    def __init__(self, n_terminals):
        self.n_terminals = n_terminals
        self.packets = []
        self.attempts = 0            # packet starts, incl. 1-slot control frames
        self.failures = 0
        self._by_start = {}          # (terminal, start) -> success

    def record_start(self, terminal, slot):
        self.attempts += 1

    def record_end(self, terminal, start, end, success):
        rec = PacketRecord(terminal, start, end, bool(success))
        self.packets.append(rec)
        self._by_start[(terminal, start)] = rec.success
        if not rec.success:
            self.failures += 1
        return rec

    def started_at(self, terminal, slot):
        return (terminal, slot) in self._by_start

    def delta(self, terminal, slot):
        """Success flag for a packet of ``terminal`` starting at ``slot``."""
        return 1 if self._by_start.get((terminal, slot), False) else 0

    def success_count(self, terminal, lo, hi):
        """Successful packets of ``terminal`` with start slot in [lo, hi)."""
        return sum(
            1 for p in self.packets
            if p.terminal == terminal and p.success and lo <= p.start < hi
        )

    def success_counts(self, lo, hi):
        counts = [0] * self.n_terminals
        for p in self.packets:
            if p.success and lo <= p.start < hi:
                counts[p.terminal] += 1
        return counts


@dataclass(frozen=True)
class SlotRecord:
    """Per-slot trace record, serializable to a line-delimited log."""

    slot: int
    actions: tuple
    senses: tuple      # per terminal: 0 idle / 1 busy / None (was transmitting)
    coerced: tuple     # intents forced idle by LBT this slot
    feedback: tuple    # FeedbackEvents for windows ending this slot

    def to_json(self):
        return json.dumps({
            "slot": self.slot,
            "actions": list(self.actions),
            "senses": [(-1 if s is None else s) for s in self.senses],
            "coerced": list(self.coerced),
            "feedback": [
                {"slot": f.slot, "kind": f.kind, "terminal": f.terminal,
                 "packet_start": f.packet_start}
                for f in self.feedback
            ],
        }, separators=(",", ":"))


class Medium:
    """Advances the shared channel one slot at a time.

    ``initial_idle_streak`` models how long the channel was idle before slot
    ``start_slot``; passing the lookback window length reproduces the warm
    all-idle history used for training episodes.
    """

    def __init__(self, topology: TopologyGraph, config: SimConfig,
                 start_slot=0, initial_idle_streak=None, trace=False):
        self.topo = topology
        self.cfg = config
        n = topology.n
        self.oh = [sorted(topology.oh_indices(i)) for i in range(n)]
        self.slot = start_slot
        self.start_slot = start_slot
        streak = config.difs if initial_idle_streak is None else initial_idle_streak
        self.streak = [streak] * n
        self.remaining = [0] * n
        self.cur_start = [None] * n
        self.ledger = TransmissionLedger(n)
        self._actions = []       # per executed slot, list[int]
        self._tx_count = []
        self.trace = [] if trace else None

    @property
    def n(self):
        return self.topo.n

    def eligible(self, n):
        """True when terminal n may start a packet this slot (LBT satisfied)."""
        return self.remaining[n] == 0 and self.streak[n] >= self.cfg.difs

    def mid_packet(self, n):
        return self.remaining[n] > 0

    def actions_at(self, slot):
        if slot < self.start_slot or slot >= self.slot:
            return [0] * self.n
        return self._actions[slot - self.start_slot]

    def step(self, intents):
        """Execute one slot.  Illegal intents are coerced, never rejected.

        Returns a SlotRecord; its feedback events become available to the
        terminals at the start of the *next* slot.
        """
        n = self.n
        difs = self.cfg.difs
        d = self.cfg.packet_len
        actions = [0] * n
        coerced = [False] * n
        for i in range(n):
            if self.remaining[i] > 0:
                actions[i] = 1       # TXOP commitment overrides the intent bit
            elif intents[i]:
                if self.streak[i] >= difs:
                    actions[i] = 1
                    self.remaining[i] = d
                    self.cur_start[i] = self.slot
                    self.ledger.record_start(i, self.slot)
                else:
                    coerced[i] = True
        senses = [None] * n
        for i in range(n):
            if actions[i] == 0:
                senses[i] = 1 if any(actions[m] for m in self.oh[i]) else 0
        for i in range(n):
            if actions[i]:
                self.streak[i] = 0
            elif senses[i] == 0:
                self.streak[i] += 1
            else:
                self.streak[i] = 0
        self._actions.append(actions)
        self._tx_count.append(sum(actions))
        feedback = []
        base = self.start_slot
        for i in range(n):
            if actions[i]:
                self.remaining[i] -= 1
                if self.remaining[i] == 0:
                    start = self.cur_start[i]
                    ok = all(
                        self._tx_count[s - base] == 1
                        for s in range(start, self.slot + 1)
                    )
                    self.ledger.record_end(i, start, self.slot, ok)
                    feedback.append(FeedbackEvent(
                        slot=self.slot, kind="ack" if ok else "nack",
                        terminal=i, packet_start=start))
                    self.cur_start[i] = None
        record = SlotRecord(self.slot, tuple(actions), tuple(senses),
                            tuple(coerced), tuple(feedback))
        if self.trace is not None:
            self.trace.append(record)
        self.slot += 1
        return record

    def success_flag(self, n, tau):
        """delta_n^tau, or None while the window [tau, tau+D-1] is incomplete."""
        if tau + self.cfg.packet_len > self.slot:
            return None
        return self.ledger.delta(n, tau)

    def global_state(self, t=None):
        """True N x W action matrix over [t-W, t-1] (zeros before start_slot)."""
        if t is None:
            t = self.slot
        w = self.cfg.lookback
        out = np.zeros((self.n, w), dtype=np.float64)
        base = self.start_slot
        for k, s in enumerate(range(t - w, t)):
            if base <= s < self.slot:
                col = self._actions[s - base]
                for i in range(self.n):
                    out[i, k] = col[i]
        return out
