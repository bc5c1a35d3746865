"""Experiment runner: wires topology + agents + trainer/baselines, manages seeds,
writes metric CSVs and checkpoints.  Named presets reproduce the desk-scale
experiments; outputs are deterministic per seed (no timestamps, embedded
config hash) so re-runs are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .baselines import run_csma, run_rtscts
from .medium import SimConfig
from .metrics import EvalReport
from .topology import TopologyError, parse_topology
from .trainer import TrainConfig, report_from_medium, train

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_IO = 3

AGENT_ALIASES = {
    "madrl-ht": "learned",
    "madrl-alt-obs": "learned-alt-obs",
    "madrl-alpha-reward": "learned-alpha-reward",
}
AGENT_FAMILIES = ("learned", "learned-alt-obs", "learned-alpha-reward",
                  "csma", "rtscts")


@dataclasses.dataclass
class ExperimentConfig:
    topology: str = "{A,B}"
    agent: str = "learned"
    seeds: list = dataclasses.field(default_factory=lambda: [0, 1, 2])
    epochs: int = 1500
    eval_every: int = 25
    eval_window: int = 1111
    duration_s: float = 1.0          # baseline simulation length
    packet_len: int = 5
    difs: int = 1
    lookback: int = 40
    episode_len: int = 100
    reward: str = "window"
    observation: str = "consolidated"
    clip: float = 0.2
    lr_actor: float = 1e-3
    lr_critic: float = 5e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    ppo_epochs: int = 4
    optimizer: str = "adam"
    eval_mode: str = "sample"
    hidden: int = 64
    entropy_coef: float = 0.0
    grad_clip: float = 0.0

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.agent = AGENT_ALIASES.get(cfg.agent, cfg.agent)
        if cfg.agent not in AGENT_FAMILIES:
            raise ValueError(f"unknown agent family {cfg.agent!r}")
        parse_topology(cfg.topology)  # validate early
        return cfg

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def sim_config(self):
        return SimConfig(packet_len=self.packet_len, difs=self.difs,
                         lookback=self.lookback, episode_len=self.episode_len)

    def train_config(self):
        reward = self.reward
        observation = self.observation
        if self.agent == "learned-alpha-reward":
            reward = "alpha"
        if self.agent == "learned-alt-obs":
            observation = "alt"
        return TrainConfig(
            epochs=self.epochs, clip=self.clip, lr_actor=self.lr_actor,
            lr_critic=self.lr_critic, gamma=self.gamma,
            gae_lambda=self.gae_lambda, ppo_epochs=self.ppo_epochs,
            optimizer=self.optimizer, reward=reward, observation=observation,
            eval_every=self.eval_every, eval_slots=self.eval_window,
            eval_mode=self.eval_mode, hidden=self.hidden,
            entropy_coef=self.entropy_coef, grad_clip=self.grad_clip)

    @property
    def duration_slots(self):
        return int(round(self.duration_s * 1e6 / 9.0))


# Presets named after the experiments they reproduce; each is a list of
# (variant label, config overrides).
PRESETS = {
    "topo2-reward-ablation": [
        ("window-reward", {"topology": "{A,B}", "agent": "learned"}),
        ("alpha-reward", {"topology": "{A,B}", "agent": "learned-alpha-reward"}),
    ],
    "topo2p-obs-ablation": [
        ("consolidated-obs", {"topology": "{A|B}", "agent": "learned"}),
        ("ack-row-obs", {"topology": "{A|B}", "agent": "learned-alt-obs"}),
    ],
    "topo3-fairness": [
        ("learned", {"topology": "{A,B,C}", "agent": "learned"}),
        ("csma", {"topology": "{A,B,C}", "agent": "csma"}),
    ],
    "topo3p-fairness": [
        ("learned", {"topology": "{A,B|C}", "agent": "learned"}),
        ("csma", {"topology": "{A,B|C}", "agent": "csma"}),
    ],
    "topo3pp-fairness": [
        ("learned", {"topology": "{A,B|B,C}", "agent": "learned"}),
        ("csma", {"topology": "{A,B|B,C}", "agent": "csma"}),
    ],
    "topo4-fairness": [
        ("learned", {"topology": "{A,B,C,D}", "agent": "learned"}),
        ("csma", {"topology": "{A,B,C,D}", "agent": "csma"}),
    ],
    "topo4p-fairness": [
        ("learned", {"topology": "{A,B,C|D}", "agent": "learned"}),
        ("csma", {"topology": "{A,B,C|D}", "agent": "csma"}),
    ],
    "topo4pp-fairness": [
        ("learned", {"topology": "{A,B|B,C|D}", "agent": "learned"}),
        ("csma", {"topology": "{A,B|B,C|D}", "agent": "csma"}),
    ],
    "topo4-qos": [
        ("csma", {"topology": "{A,B,C,D}", "agent": "csma", "seeds": list(range(10))}),
        ("learned", {"topology": "{A,B,C,D}", "agent": "learned"}),
    ],
    "topo3p-rtscts": [
        ("csma", {"topology": "{A,B|C}", "agent": "csma"}),
        ("rtscts", {"topology": "{A,B|C}", "agent": "rtscts"}),
        ("learned", {"topology": "{A,B|C}", "agent": "learned"}),
    ],
}


def _header_lines(cfg: ExperimentConfig):
    return [f"# config_hash={cfg.hash()} version={__version__}"]


def run_baseline_variant(cfg: ExperimentConfig, out_dir):
    topo = parse_topology(cfg.topology)
    sim_cfg = cfg.sim_config()
    train_cfg = cfg.train_config()   # carries alpha/eps/eval window defaults
    names = topo.names
    lines = _header_lines(cfg)
    lines.append("seed," + EvalReport.csv_header(names))
    reports = []
    for seed in cfg.seeds:
        slots = cfg.duration_slots
        if cfg.agent == "csma":
            medium = run_csma(topo, sim_cfg, slots, seed)
            report = report_from_medium(medium, topo, sim_cfg, train_cfg,
                                        window_slots=cfg.eval_window)
        else:
            sim = run_rtscts(topo, sim_cfg, slots, seed)
            report = _report_from_rtscts(sim, topo, sim_cfg, train_cfg,
                                         cfg.eval_window)
        reports.append(report)
        lines.append(f"{seed}," + report.csv_row())
    _write(os.path.join(out_dir, "metrics.csv"), "\n".join(lines) + "\n")
    return reports


def _report_from_rtscts(sim, topo, sim_cfg, train_cfg, eval_window):
    # Adapt the RTS/CTS simulation to the windowed reporting path.
    class _Shim:
        pass

    shim = _Shim()
    shim.start_slot = 0
    shim.slot = sim.slot
    shim.ledger = sim.ledger
    return report_from_medium(shim, topo, sim_cfg, train_cfg,
                              window_slots=eval_window)


def run_learned_variant(cfg: ExperimentConfig, out_dir):
    topo = parse_topology(cfg.topology)
    sim_cfg = cfg.sim_config()
    train_cfg = cfg.train_config()
    names = topo.names
    results = []
    for seed in cfg.seeds:
        lines = _header_lines(cfg)
        thr_cols = ",".join(f"thr_{n}" for n in names)
        lines.append(f"epoch,slots_elapsed,norm_fairness,{thr_cols},pcr,"
                     f"mean_reward,unknown_fraction")
        result = train(topo, sim_cfg, train_cfg, seed)
        for epoch, slots, rep in result.rows:
            thr = ",".join(f"{t:.6f}" for t in rep.throughputs)
            p = "nan" if rep.pcr is None else f"{rep.pcr:.6f}"
            lines.append(f"{epoch},{slots},{rep.normalized:.6f},{thr},{p},"
                         f"{rep.mean_reward:.6f},{rep.unknown_fraction:.6f}")
        _write(os.path.join(out_dir, f"seed{seed}.csv"),
               "\n".join(lines) + "\n")
        for i, actor in enumerate(result.actors):
            actor.save(os.path.join(out_dir, f"seed{seed}_actor{i}.npz"))
        result.critic.save(os.path.join(out_dir, f"seed{seed}_critic.npz"))
        results.append(result)
    return results


def _write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def run_experiment(variants, out_dir):
    """``variants``: list of (label, ExperimentConfig).  Returns per-variant data."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "version": __version__,
        "variants": {label: dict(cfg.to_dict(), config_hash=cfg.hash())
                     for label, cfg in variants},
    }
    _write(os.path.join(out_dir, "config.json"),
           json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    out = {}
    for label, cfg in variants:
        vdir = os.path.join(out_dir, label)
        os.makedirs(vdir, exist_ok=True)
        if cfg.agent in ("csma", "rtscts"):
            out[label] = run_baseline_variant(cfg, vdir)
        else:
            out[label] = run_learned_variant(cfg, vdir)
    return out


# ---------------------------------------------------------------------------
# compare


def _final_rows(variant_dir):
    """Last data row of every CSV in a variant directory, as float dicts."""
    rows = []
    for name in sorted(os.listdir(variant_dir)):
        if not name.endswith(".csv"):
            continue
        with open(os.path.join(variant_dir, name)) as fh:
            lines = [l.strip() for l in fh if l.strip() and not l.startswith("#")]
        if len(lines) < 2:
            continue
        header = lines[0].split(",")
        vals = lines[-1].split(",")
        row = {}
        for k, v in zip(header, vals):
            try:
                row[k] = float(v)
            except ValueError:
                row[k] = float("nan")
        rows.append(row)
    return rows


def compare(run_dirs, out=None):
    """Side-by-side means/stddevs of final metrics across seeds per variant."""
    out = out if out is not None else sys.stdout
    if len(run_dirs) < 2:
        raise ValueError("compare needs at least two run directories")
    topologies = set()
    tables = {}
    for rd in run_dirs:
        cfg_path = os.path.join(rd, "config.json")
        with open(cfg_path) as fh:
            manifest = json.load(fh)
        for label, vcfg in manifest["variants"].items():
            topologies.add(vcfg["topology"])
            rows = _final_rows(os.path.join(rd, label))
            if not rows:
                continue
            keys = [k for k in rows[0]
                    if k not in ("seed", "epoch", "slots_elapsed")]
            stats = {}
            for k in keys:
                vals = [r[k] for r in rows if k in r and not np.isnan(r[k])]
                if vals:
                    stats[k] = (float(np.mean(vals)), float(np.std(vals)))
                else:
                    stats[k] = (float("nan"), float("nan"))
            tables[f"{rd}:{label}"] = stats
    if len(topologies) > 1:
        raise ValueError(f"incompatible configs: topologies {sorted(topologies)}")
    keys = sorted({k for t in tables.values() for k in t})
    print("metric," + ",".join(tables), file=out)
    for k in keys:
        cells = []
        for label in tables:
            if k in tables[label]:
                m, s = tables[label][k]
                cells.append(f"{m:.4f}±{s:.4f}")
            else:
                cells.append("-")
        print(f"{k}," + ",".join(cells), file=out)
    return tables


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="hiddenmac")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a preset or an ad-hoc experiment")
    r.add_argument("--preset", choices=sorted(PRESETS))
    r.add_argument("--config", help="JSON config file")
    r.add_argument("--topology")
    r.add_argument("--agent")
    r.add_argument("--seeds", help="count (N) or comma-separated list")
    r.add_argument("--epochs", type=int)
    r.add_argument("--eval-window", type=int, dest="eval_window")
    r.add_argument("--eval-every", type=int, dest="eval_every")
    r.add_argument("--duration-s", type=float, dest="duration_s")
    r.add_argument("--out", required=True)
    c = sub.add_parser("compare", help="summarize runs side by side")
    c.add_argument("run_dirs", nargs="+")
    return p


def _parse_seeds(text):
    if "," in text:
        return [int(s) for s in text.split(",")]
    return list(range(int(text)))


def cmd_run(args):
    overrides = {}
    if args.config:
        with open(args.config) as fh:
            overrides.update(json.load(fh))
    for key in ("topology", "agent", "epochs", "eval_window", "eval_every",
                "duration_s"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    if args.seeds is not None:
        overrides["seeds"] = _parse_seeds(args.seeds)
    if args.preset:
        variants = []
        for label, preset_over in PRESETS[args.preset]:
            # command-line flags tune a preset, but never change what it
            # measures (topology and agent family stay pinned)
            data = dict(overrides)
            data.pop("topology", None)
            data.pop("agent", None)
            data.update(preset_over)
            variants.append((label, ExperimentConfig.from_dict(data)))
    else:
        variants = [("run", ExperimentConfig.from_dict(overrides))]
    run_experiment(variants, args.out)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "compare":
            compare(args.run_dirs)
            return EXIT_OK
    except (ValueError, TopologyError, KeyError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
