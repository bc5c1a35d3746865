"""Training loop: episodic rollouts, delayed rewards, GAE at the AP, PPO per terminal.

Each terminal owns a distinct actor; a single critic (conceptually at the AP)
sees the true global action history.  Advantages are computed once per episode
from the shared reward stream and broadcast identically to every agent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .medium import Medium, SimConfig
from .metrics import (EvalReport, alpha_fairness, delay_stats,
                      fairness_utility, normalized_fairness, optimal_bound,
                      pcr, throughputs)
from .neural import Adam, BiLstmNet, Sgd, make_actor, make_critic
from .observation import AltObservation, Observation
from .reward import WindowCounts, window_reward_branch
from .topology import TopologyGraph


@dataclass
class TrainConfig:
    epochs: int = 10000
    clip: float = 0.2
    lr_actor: float = 1e-3
    lr_critic: float = 5e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    ppo_epochs: int = 4
    optimizer: str = "adam"            # "adam" | "sgd"
    reward: str = "window"             # "window" | "alpha"
    observation: str = "consolidated"  # "consolidated" | "alt"
    alpha: float = 1.0
    eps_fairness: float = 1e-3
    eval_every: int = 25
    eval_slots: int = 1111
    eval_mode: str = "sample"          # "sample" | "argmax"
    hidden: int = 64
    entropy_coef: float = 0.0          # off by default; hook only
    grad_clip: float = 0.0             # 0 disables


# ---------------------------------------------------------------------------
# Advantage / return math


def gae_advantages(rewards, values, gamma, lam):
    """Generalized advantage estimates with terminal bootstrap value 0."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values length mismatch")
    n = len(rewards)
    adv = np.zeros(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        v_next = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * v_next - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
    return adv


def discounted_returns_exclusive(rewards, gamma):
    """R_t = sum_{t'>t} gamma^{t'-t} r_{t'} (the slot's own reward excluded)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    n = len(rewards)
    out = np.zeros(n)
    for t in range(n - 2, -1, -1):
        out[t] = gamma * (rewards[t + 1] + out[t + 1])
    return out


def reward_sequence(ledger, ts, window, packet_len, kind="window",
                    alpha=1.0, eps=1e-3):
    """Vector of global rewards for the decision slots ``ts`` (complete ledger)."""
    n = ledger.n_terminals
    lo = ts[0] - window
    hi = ts[-1] + 1
    span = hi - lo
    succ = np.zeros((n, span), dtype=np.int64)
    start = np.zeros((n, span), dtype=bool)
    for p in ledger.packets:
        if lo <= p.start < hi:
            start[p.terminal, p.start - lo] = True
            if p.success:
                succ[p.terminal, p.start - lo] = 1
    csum = np.concatenate(
        [np.zeros((n, 1), dtype=np.int64), np.cumsum(succ, axis=1)], axis=1)
    out = np.empty(len(ts))
    for j, t in enumerate(ts):
        a, b = t - window - lo, t - lo
        m = csum[:, b] - csum[:, a]
        if kind == "alpha":
            out[j] = sum(
                fairness_utility(c * packet_len / window + eps, alpha)
                for c in m)
        else:
            deltas = succ[:, b]
            counts = WindowCounts(m=tuple(int(v) for v in m),
                                  f=int(deltas.any()),
                                  any_start=int(start[:, b].any()))
            out[j] = window_reward_branch(counts, deltas)[1]
    return out


# ---------------------------------------------------------------------------
# Agents and rollouts


@dataclass
class Step:
    t: int
    obs: np.ndarray          # encoded observation the actor saw (3 x W)
    action: int
    prob: float              # behavior probability recorded at decision time
    forced: bool             # LBT-coerced idle or mid-packet commitment


@dataclass
class Trajectory:
    steps: list = field(default_factory=list)

    def decision_steps(self, max_t):
        return [s for s in self.steps if not s.forced and s.t <= max_t]


class LearnedAgent:
    """Terminal driven by a policy network over its partial observation."""

    def __init__(self, index, actor: BiLstmNet, sim_cfg: SimConfig,
                 alt_obs=False, mode="sample"):
        self.index = index
        self.actor = actor
        self.cfg = sim_cfg
        self.alt = alt_obs
        self.mode = mode
        cls = AltObservation if alt_obs else Observation
        self.obs = cls(sim_cfg.lookback, sim_cfg.packet_len)

    def begin_episode(self):
        self.obs.reset_idle()

    def observe(self, own_action, sense, ack):
        if self.alt:
            self.obs.push(own_action, sense, ack)
        else:
            self.obs.push(own_action, sense)
            if ack:
                self.obs.revise_on_ack()

    def decide(self, rng):
        enc = self.obs.encode()
        probs = self.actor.forward(enc)
        if self.mode == "argmax":
            action = int(np.argmax(probs))
        else:
            action = 1 if rng.random() < probs[1] else 0
        return action, float(probs[action]), enc


@dataclass
class EpisodeResult:
    medium: Medium
    trajectories: list
    unknown_fraction: float
    slots: tuple                 # (first_slot, end_slot)


def run_episode(agents, topo: TopologyGraph, cfg: SimConfig, rng,
                slots=None, collect=True, trace=False):
    """Roll one episode; slot indices run from W to W + slots.

    Observation buffers start warm with W slots of all-idle history.  Agents
    are queried only on slots where they may actually start a packet; forced
    slots (mid-packet commitment, LBT-blocked) are recorded without a policy
    query and never contribute to the PPO objective.
    """
    w = cfg.lookback
    n_slots = (cfg.episode_len - w) if slots is None else slots
    end = w + n_slots
    medium = Medium(topo, cfg, start_slot=w, initial_idle_streak=w, trace=trace)
    for a in agents:
        a.begin_episode()
    trajs = [Trajectory() for _ in agents]
    record = None
    unk_sum = 0.0
    unk_n = 0
    for t in range(w, end):
        if record is not None:
            ack = any(e.kind == "ack" for e in record.feedback)
            for i, a in enumerate(agents):
                a.observe(record.actions[i], record.senses[i], ack)
        intents = [0] * len(agents)
        for i, a in enumerate(agents):
            if medium.mid_packet(i):
                intents[i] = 1
                if collect:
                    trajs[i].steps.append(Step(t, None, 1, 1.0, True))
            elif not medium.eligible(i):
                if collect:
                    trajs[i].steps.append(Step(t, None, 0, 1.0, True))
            else:
                action, prob, enc = a.decide(rng)
                intents[i] = action
                if collect:
                    trajs[i].steps.append(Step(t, enc, action, prob, False))
            unk_sum += a.obs.unknown_fraction()
            unk_n += 1
        record = medium.step(intents)
    unk = unk_sum / unk_n if unk_n else float("nan")
    return EpisodeResult(medium, trajs, unk, (w, end))


# ---------------------------------------------------------------------------
# PPO updates


def ppo_actor_update(net, opt, obs_batch, actions, advantages, clip,
                     epochs=4, entropy_coef=0.0, grad_clip=0.0):
    """Clipped-surrogate gradient ascent over one episode batch.

    The behavior probabilities are re-evaluated with the pre-update parameters
    at the start of the update (bitwise identical to the first epoch's
    forward), so the importance ratio is exactly 1 at the first epoch.
    Returns diagnostics including those first-epoch ratios.
    """
    m = len(actions)
    if m == 0:
        return {"steps": 0, "skipped": False, "first_ratios": np.zeros(0)}
    idx = np.arange(m)
    actions = np.asarray(actions)
    advantages = np.asarray(advantages, dtype=np.float64)
    diag = {"steps": m, "skipped": False, "first_ratios": None}
    out0, cache0 = net.forward(obs_batch, want_cache=True)
    old_p = out0[idx, actions].copy()
    if not np.all(np.isfinite(old_p)) or np.any(old_p <= 0.0):
        diag["skipped"] = True
        return diag
    for e in range(epochs):
        if e == 0:
            probs, cache = out0, cache0
        else:
            probs, cache = net.forward(obs_batch, want_cache=True)
        p = probs[idx, actions]
        ratio = p / old_p
        if not np.all(np.isfinite(ratio)):
            diag["skipped"] = True
            break
        if e == 0:
            diag["first_ratios"] = ratio.copy()
        unclipped = ratio * advantages
        clip_val = np.where(advantages >= 0.0,
                            (1.0 + clip) * advantages,
                            (1.0 - clip) * advantages)
        active = unclipped <= clip_val
        dprobs = np.zeros_like(probs)
        dprobs[idx, actions] = np.where(active, advantages / old_p, 0.0)
        if entropy_coef:
            safe = np.clip(probs, 1e-12, None)
            dprobs += entropy_coef * (-(np.log(safe) + 1.0))
        grads = net.backward(cache, -dprobs)  # minimize the negated objective
        if grad_clip:
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if norm > grad_clip:
                scale = grad_clip / norm
                grads = {k: g * scale for k, g in grads.items()}
        opt.step(grads)
    return diag


def critic_update(net, opt, states, targets, epochs=4):
    """MSE regression of the value head onto empirical discounted returns."""
    targets = np.asarray(targets, dtype=np.float64)
    losses = []
    for _ in range(epochs):
        v, cache = net.forward(states, want_cache=True)
        err = v[:, 0] - targets
        losses.append(float(np.mean(err ** 2)))
        dv = (2.0 * err / len(err))[:, None]
        grads = net.backward(cache, dv)
        opt.step(grads)
    return losses


# ---------------------------------------------------------------------------
# Evaluation


def evaluate(actors, topo, sim_cfg, train_cfg, seed, slots=None, mode=None):
    """Run the current policies for an evaluation stretch and report metrics."""
    slots = slots or train_cfg.eval_slots
    mode = mode or train_cfg.eval_mode
    rng = np.random.default_rng(seed)
    agents = [LearnedAgent(i, actors[i], sim_cfg,
                           alt_obs=(train_cfg.observation == "alt"), mode=mode)
              for i in range(topo.n)]
    ep = run_episode(agents, topo, sim_cfg, rng, slots=slots, collect=False)
    return report_from_medium(ep.medium, topo, sim_cfg, train_cfg,
                              unknown_fraction=ep.unknown_fraction)


def report_from_medium(medium, topo, sim_cfg, train_cfg, unknown_fraction=float("nan"),
                       window_slots=1111):
    """Windowed metrics over everything a finished medium recorded."""
    lo, hi = medium.start_slot, medium.slot
    d = sim_cfg.packet_len
    bound = optimal_bound(topo, d, sim_cfg.difs, train_cfg.alpha,
                          train_cfg.eps_fairness)
    wins = []
    s = lo
    while s + window_slots <= hi:
        wins.append((s, s + window_slots))
        s += window_slots
    if not wins:
        wins = [(lo, hi)]
    fvals, nvals, tvals = [], [], []
    for a, b in wins:
        thr = throughputs(medium.ledger, a, b, d)
        f = alpha_fairness(thr, train_cfg.alpha, train_cfg.eps_fairness)
        fvals.append(f)
        nvals.append(normalized_fairness(f, topo.n, bound.fairness,
                                         train_cfg.alpha, train_cfg.eps_fairness))
        tvals.append(thr)
    thr_mean = [float(np.mean([t[i] for t in tvals])) for i in range(topo.n)]
    ds = delay_stats(medium.ledger, lo, hi, sim_cfg.slot_us,
                     sim_cfg.drop_deadline_slots)
    ts = list(range(lo + sim_cfg.lookback, hi - d + 1))
    if ts and medium.ledger.packets:
        rew = reward_sequence(medium.ledger, ts, sim_cfg.lookback, d,
                              kind=train_cfg.reward, alpha=train_cfg.alpha,
                              eps=train_cfg.eps_fairness)
        mean_reward = float(np.mean(rew))
    else:
        mean_reward = float("nan")
    return EvalReport(
        throughputs=thr_mean,
        fairness=float(np.mean(fvals)),
        normalized=float(np.mean(nvals)),
        pcr=pcr(medium.ledger),
        mean_delay_ms=ds.mean_ms,
        jitter_ms=ds.jitter_ms,
        drops=ds.drops,
        unknown_fraction=unknown_fraction,
        mean_reward=mean_reward,
    )


# ---------------------------------------------------------------------------
# Full training loop


@dataclass
class TrainResult:
    actors: list
    critic: BiLstmNet
    rows: list                 # (epoch, slots_elapsed, EvalReport)
    stopped_early: bool
    epochs_run: int


def train(topo: TopologyGraph, sim_cfg: SimConfig, train_cfg: TrainConfig,
          seed, stop_fn=None, log_fn=None):
    """Run the full multi-agent loop; deterministic given (seed, configs).

    ``stop_fn(report)`` may end training early once an evaluation snapshot
    satisfies the caller's criterion.
    """
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(topo.n + 3)
    actors = [make_actor(rng=np.random.default_rng(children[i]),
                         hidden=train_cfg.hidden) for i in range(topo.n)]
    critic = make_critic(topo.n, rng=np.random.default_rng(children[topo.n]),
                         hidden=train_cfg.hidden)
    rollout_rng = np.random.default_rng(children[topo.n + 1])
    eval_root = children[topo.n + 2]
    opt_cls = Adam if train_cfg.optimizer == "adam" else Sgd
    actor_opts = [opt_cls(a, train_cfg.lr_actor) for a in actors]
    critic_opt = opt_cls(critic, train_cfg.lr_critic)
    agents = [LearnedAgent(i, actors[i], sim_cfg,
                           alt_obs=(train_cfg.observation == "alt"))
              for i in range(topo.n)]
    w = sim_cfg.lookback
    d = sim_cfg.packet_len
    t_end = sim_cfg.episode_len
    ts = list(range(w, t_end - d + 1))   # decision slots with a complete window
    rows = []
    stopped = False
    epochs_run = 0
    for k in range(train_cfg.epochs):
        ep = run_episode(agents, topo, sim_cfg, rollout_rng)
        rewards = reward_sequence(ep.medium.ledger, ts, w, d,
                                  kind=train_cfg.reward, alpha=train_cfg.alpha,
                                  eps=train_cfg.eps_fairness)
        states = np.stack([ep.medium.global_state(t) for t in ts])
        values = critic.forward(states)[:, 0]
        adv = gae_advantages(rewards, values, train_cfg.gamma,
                             train_cfg.gae_lambda)
        adv_by_t = {t: adv[j] for j, t in enumerate(ts)}
        for i, traj in enumerate(ep.trajectories):
            steps = traj.decision_steps(max_t=ts[-1])
            if not steps:
                continue
            obs_batch = np.stack([s.obs for s in steps])
            actions = [s.action for s in steps]
            a_vec = [adv_by_t[s.t] for s in steps]
            ppo_actor_update(actors[i], actor_opts[i], obs_batch, actions,
                             a_vec, train_cfg.clip,
                             epochs=train_cfg.ppo_epochs,
                             entropy_coef=train_cfg.entropy_coef,
                             grad_clip=train_cfg.grad_clip)
        targets = discounted_returns_exclusive(rewards, train_cfg.gamma)
        critic_update(critic, critic_opt, states, targets,
                      epochs=train_cfg.ppo_epochs)
        epochs_run = k + 1
        if (k + 1) % train_cfg.eval_every == 0 or k == train_cfg.epochs - 1:
            eval_seed = np.random.SeedSequence(
                entropy=eval_root.entropy, spawn_key=eval_root.spawn_key + (k,))
            report = evaluate(actors, topo, sim_cfg, train_cfg, eval_seed)
            slots_elapsed = epochs_run * (t_end - w)
            rows.append((epochs_run, slots_elapsed, report))
            if log_fn:
                log_fn(epochs_run, slots_elapsed, report)
            if stop_fn and stop_fn(report):
                stopped = True
                break
    return TrainResult(actors, critic, rows, stopped, epochs_run)
