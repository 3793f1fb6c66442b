"""End-to-end demo on a planted universe: brute-force the optimum, train the
agent against the simulated oracle, and report what the archive found.

    python scripts/planted_demo.py --n 8 --length 3 --episodes 200 --t1 0.3
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from tracesynth.agent import AgentConfig, EpisodeConfig, train
from tracesynth.analysis import analyze
from tracesynth.oracle import OracleConfig, SimulatedOracle, brute_force_best_trace
from tracesynth.trace import read_corpus
from tracesynth.universe import generate_planted_universe


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--length", type=int, default=3)
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--t1", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--universe-seed", type=int, default=5)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    universe = generate_planted_universe(args.n, args.length, args.universe_seed)
    oracle_cfg = OracleConfig()
    best, best_total = brute_force_best_trace(universe, oracle_cfg, args.length)
    print(f"universe {universe.universe_id}: optimum {[universe.name_of(c) for c in best]} = {best_total}")

    out = args.out or Path(tempfile.mkdtemp(prefix="planted-"))
    cfg = EpisodeConfig(episodes=args.episodes, trace_len=args.length, t1=args.t1)
    summary, logs, agent = train(universe, SimulatedOracle(universe, oracle_cfg), AgentConfig(), cfg,
                                 out=out, seed=args.seed)
    print(f"{summary.archived}/{summary.episodes} episodes archived in {agent.steps} steps")
    if logs and any(e.archived for e in logs):
        top = max((e for e in logs if e.archived), key=lambda e: e.coverage)
        print(f"best archived {[universe.name_of(c) for c in top.archived]} = {top.coverage} "
              f"({100 * top.coverage / best_total:.1f}% of optimum)")
    losses = [l for _, l in agent.losses]
    if len(losses) >= 20:
        k = len(losses) // 10
        print(f"TD loss: first decile {np.mean(losses[:k]):.4f}, last decile {np.mean(losses[-k:]):.4f}")
    report = analyze(read_corpus(out / "archive.corpus", universe), universe)
    print(f"archive: {report.unique_syscalls} unique calls, explicit {report.explicit_satisfied}/"
          f"{report.explicit_total}, implicit {report.implicit_satisfied}/{report.implicit_total}")
    print(f"outputs in {out}")


if __name__ == "__main__":
    main()
