"""Global per-slot rewards over the transmission ledger.

Two designs: the window-based ternary reward built on relative success counts,
and the fairness-sum reward used as an ablation benchmark.  Both are pure
functions of the ledger and are computable only once the packet window
starting at the decision slot has completed (D slots later).
"""

from __future__ import annotations

from dataclasses import dataclass

from .metrics import fairness_utility


@dataclass(frozen=True)
class WindowCounts:
    """Per-terminal success counts over the look-back window of slot t."""

    m: tuple          # M_n: successes with start slot in [t-W, t-1]
    f: int            # OR of this slot's success flags
    any_start: int    # did any packet start at slot t

    @property
    def g(self):
        return max(self.m) - min(self.m)


def window_reward_branch(counts: WindowCounts, deltas):
    """Branch id and value of the ternary reward.

    Branches: "fair" (+1), "catchup" (+1), "overtake" (-1), "collision" (-1),
    "silent" (0).  "silent" means no packet *starts* at the decision slot;
    mid-packet slots of an ongoing transmission are not punished.  When several
    terminals tie for the minimum count, a success by any of them counts as the
    lagging terminal catching up.
    """
    if not counts.any_start:
        return "silent", 0
    if not counts.f:
        return "collision", -1
    if counts.g <= 1:
        return "fair", 1
    lo = min(counts.m)
    laggards = [n for n, v in enumerate(counts.m) if v == lo]
    if any(deltas[n] for n in laggards):
        return "catchup", 1
    return "overtake", -1


def window_counts(ledger, t, window):
    """Assemble WindowCounts for decision slot t from a complete ledger."""
    n = ledger.n_terminals
    m = tuple(ledger.success_counts(t - window, t))
    deltas = tuple(ledger.delta(i, t) for i in range(n))
    any_start = int(any(ledger.started_at(i, t) for i in range(n)))
    return WindowCounts(m=m, f=int(any(deltas)), any_start=any_start), deltas


def window_reward(ledger, t, window):
    """Ternary global reward for decision slot t."""
    counts, deltas = window_counts(ledger, t, window)
    return window_reward_branch(counts, deltas)[1]


def alpha_reward(ledger, t, window, packet_len, alpha=1.0, eps=1e-3):
    """Fairness-sum reward over the look-back window of slot t."""
    counts = ledger.success_counts(t - window, t)
    return sum(
        fairness_utility(c * packet_len / window + eps, alpha) for c in counts
    )


def alpha_reward_from_throughputs(throughputs, alpha=1.0, eps=1e-3):
    return sum(fairness_utility(t + eps, alpha) for t in throughputs)
