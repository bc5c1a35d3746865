"""Evaluation metrics (throughput, fairness, PCR, delay) and the optimal-schedule oracle.

The oracle searches LBT-feasible periodic collision-free schedules to obtain a
per-topology fairness upper bound used to normalize measured fairness to [0,1].
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

from .topology import TopologyGraph

EPSILON = 1e-3  # floor added to throughputs so log fairness stays finite


def fairness_utility(x, alpha=1.0):
    """Concave per-terminal utility of throughput (log when alpha == 1)."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha == 1.0:
        return math.log(x)
    return x ** (1.0 - alpha) / (1.0 - alpha)


def alpha_fairness(throughputs, alpha=1.0, eps=EPSILON):
    """Sum of per-terminal utilities of (throughput + eps)."""
    if any(t < 0 for t in throughputs):
        raise ValueError("throughputs must be non-negative")
    return sum(fairness_utility(t + eps, alpha) for t in throughputs)


def fairness_lower_bound(n_terminals, alpha=1.0, eps=EPSILON):
    """Fairness of the never-transmit policy set."""
    return n_terminals * fairness_utility(eps, alpha)


def normalized_fairness(f, n_terminals, f_ub, alpha=1.0, eps=EPSILON):
    f_lb = fairness_lower_bound(n_terminals, alpha, eps)
    return (f - f_lb) / (f_ub - f_lb)


def throughput(ledger, n, lo, hi, packet_len):
    """Fraction of [lo, hi) carrying packets of terminal n that completed in it."""
    if hi <= lo:
        raise ValueError("empty evaluation window")
    count = sum(
        1 for p in ledger.packets
        if p.terminal == n and p.success and p.start >= lo and p.end < hi
    )
    return count * packet_len / (hi - lo)


def throughputs(ledger, lo, hi, packet_len):
    return [throughput(ledger, n, lo, hi, packet_len)
            for n in range(ledger.n_terminals)]


def pcr(ledger):
    """Packet collision rate: failed starts / all starts; None with no attempts."""
    if ledger.attempts == 0:
        return None
    return ledger.failures / ledger.attempts


@dataclass(frozen=True)
class DelayStats:
    mean_ms: float
    jitter_ms: float          # standard deviation of packet delay
    mean_succ_diff_ms: float  # mean |successive difference|, emitted alongside
    drops: int
    count: int


def delay_stats(ledger, sim_start, sim_end, slot_us, deadline_slots):
    """Head-of-line delay statistics under saturated traffic.

    The delay clock of a packet starts when it becomes head of line (the
    previous packet's delivery or drop) and stops at its ACK delivery slot.
    A head-of-line packet not delivered within the deadline is dropped and
    replaced.  Each terminal's first delivery only starts the clock (its
    head-of-line time predates the simulation), so steady-state schedules
    report zero jitter.
    """
    delays = []
    per_terminal = [[] for _ in range(ledger.n_terminals)]
    drops = 0
    for p in sorted(ledger.packets, key=lambda p: p.end):
        if p.success:
            per_terminal[p.terminal].append(p.end + 1)  # delivery slot
    for deliveries in per_terminal:
        if not deliveries:
            hol = sim_start
            while sim_end - hol > deadline_slots:
                drops += 1
                hol += deadline_slots
            continue
        hol = deliveries[0]  # clock starts at the first delivery
        for c in deliveries[1:]:
            while c - hol > deadline_slots:
                drops += 1
                hol += deadline_slots
            delays.append(c - hol)
            hol = c
        while sim_end - hol > deadline_slots:
            drops += 1
            hol += deadline_slots
    if not delays:
        return DelayStats(float("nan"), float("nan"), float("nan"), drops, 0)
    ms = [d * slot_us / 1000.0 for d in delays]
    mean = sum(ms) / len(ms)
    var = sum((x - mean) ** 2 for x in ms) / len(ms)
    if len(ms) > 1:
        msd = sum(abs(a - b) for a, b in zip(ms[1:], ms)) / (len(ms) - 1)
    else:
        msd = 0.0
    return DelayStats(mean, math.sqrt(var), msd, drops, len(ms))


# ---------------------------------------------------------------------------
# Optimal-schedule oracle


@dataclass(frozen=True)
class OptimalBound:
    fairness: float
    witness: str              # e.g. "A0B0" (0 = idle slot), repeated forever
    throughputs: tuple
    period: int
    exhaustive: bool = True   # False when the search budget was exceeded


def _feasible(seq, topo, d, difs):
    """seq: list of tokens; token is ('p', terminal) or ('i',).

    Returns per-terminal packet counts if the cyclic schedule is collision-free
    and LBT-feasible, else None.
    """
    period = sum(d if tok[0] == "p" else 1 for tok in seq)
    # Unroll one period to slot level.
    owner = [-1] * period  # transmitting terminal per slot, -1 = idle
    starts = []
    pos = 0
    counts = [0] * topo.n
    for tok in seq:
        if tok[0] == "p":
            term = tok[1]
            starts.append((term, pos))
            for k in range(d):
                owner[pos + k] = term
            counts[term] += 1
            pos += d
        else:
            pos += 1
    audible = [set(topo.oh_indices(n)) | {n} for n in range(topo.n)]
    for term, s in starts:
        for k in range(1, difs + 1):
            prev = owner[(s - k) % period]
            if prev in audible[term]:
                return None  # sensed busy within the DIFS window
    return counts


@lru_cache(maxsize=None)
def _optimal_bound_cached(topo: TopologyGraph, d, difs, alpha, eps, max_period):
    best = None
    names = topo.names
    for period in range(d, max_period + 1):
        max_packets = period // d
        for k in range(1, max_packets + 1):
            idles = period - k * d
            m = k + idles
            for packet_pos in itertools.combinations(range(m), k):
                packet_pos = set(packet_pos)
                for labels in itertools.product(range(topo.n), repeat=k):
                    seq = []
                    it = iter(labels)
                    for j in range(m):
                        seq.append(("p", next(it)) if j in packet_pos else ("i",))
                    counts = _feasible(seq, topo, d, difs)
                    if counts is None:
                        continue
                    thr = tuple(c * d / period for c in counts)
                    f = alpha_fairness(thr, alpha, eps)
                    if best is None or f > best[0] + 1e-15:
                        witness = "".join(
                            names[t[1]] if t[0] == "p" else "0" for t in seq)
                        best = (f, witness, thr, period)
    if best is None:
        return OptimalBound(fairness_lower_bound(topo.n, alpha, eps), "",
                            tuple([0.0] * topo.n), 0, exhaustive=False)
    return OptimalBound(*best)


def optimal_bound(topo: TopologyGraph, packet_len, difs, alpha=1.0,
                  eps=EPSILON, max_period=None):
    """Fairness upper bound from exhaustive periodic-schedule search (N <= 6).

    The search covers cyclic collision-free schedules up to period
    4*(packet_len + difs) slots, enough to pack one packet per terminal with
    the minimum idle gaps in every topology of interest.
    """
    if topo.n > 6:
        raise ValueError("oracle search is tractable only for N <= 6")
    if max_period is None:
        max_period = 4 * (packet_len + difs)
    return _optimal_bound_cached(topo, packet_len, difs, alpha, eps, max_period)


@dataclass
class EvalReport:
    """One evaluation row; CSV and JSON serializable."""

    throughputs: list
    fairness: float
    normalized: float
    pcr: float
    mean_delay_ms: float
    jitter_ms: float
    drops: int
    unknown_fraction: float = float("nan")
    mean_reward: float = float("nan")

    @staticmethod
    def csv_header(names):
        thr = ",".join(f"thr_{n}" for n in names)
        return (f"{thr},fairness,norm_fairness,pcr,mean_delay_ms,jitter_ms,"
                f"drops,unknown_fraction,mean_reward")

    def csv_row(self):
        thr = ",".join(f"{t:.6f}" for t in self.throughputs)
        p = "nan" if self.pcr is None else f"{self.pcr:.6f}"
        return (f"{thr},{self.fairness:.6f},{self.normalized:.6f},{p},"
                f"{self.mean_delay_ms:.6f},{self.jitter_ms:.6f},{self.drops},"
                f"{self.unknown_fraction:.6f},{self.mean_reward:.6f}")

    def to_dict(self):
        return {
            "throughputs": list(self.throughputs),
            "fairness": self.fairness,
            "normalized": self.normalized,
            "pcr": self.pcr,
            "mean_delay_ms": self.mean_delay_ms,
            "jitter_ms": self.jitter_ms,
            "drops": self.drops,
            "unknown_fraction": self.unknown_fraction,
            "mean_reward": self.mean_reward,
        }
