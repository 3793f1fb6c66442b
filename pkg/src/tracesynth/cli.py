"""Command-line entry point: ``tracesynth <subcommand> ...``.

Every subcommand writes a ``manifest.json`` (resolved flags, seeds, paths,
tool version) next to its outputs. Log verbosity comes from ``TRACESYNTH_LOG``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .agent import AgentConfig, EpisodeConfig, train
from .analysis import agreement, analyze, compare_report, histogram_csv
from .oracle import MockServer, OracleConfig, OracleError, RemoteOracle, SimulatedOracle
from .trace import DEFAULT_TRACE_LEN, pack_corpus, random_trace, read_corpus, sample_corpus, write_corpus
from .universe import (
    bundled_universe_path,
    generate_planted_universe,
    generate_synthetic_universe,
    load_universe,
    save_universe,
)

log = logging.getLogger("tracesynth")


class CliError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seeds: dict
    inputs: dict
    outputs: dict
    version: str = __version__
    created: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=1, sort_keys=True, default=str) + "\n")


def _config_of(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _oracle_config(args) -> OracleConfig:
    return OracleConfig(
        explicit_bonus=args.explicit_bonus,
        implicit_bonus=args.implicit_bonus,
        saturation_cap=args.cap,
        noise_amplitude=args.noise,
        rng_seed=args.oracle_seed,
    )


def _add_oracle_flags(p):
    g = p.add_argument_group("simulated oracle")
    g.add_argument("--explicit-bonus", type=int, default=30)
    g.add_argument("--implicit-bonus", type=int, default=30)
    g.add_argument("--cap", type=int, default=10_000, help="per-call saturation cap")
    g.add_argument("--noise", type=int, default=0, help="uniform noise amplitude")
    g.add_argument("--oracle-seed", type=int, default=0)


def _add_universe_flag(p):
    p.add_argument("--universe", type=Path, default=bundled_universe_path(),
                   help="universe JSON file (default: bundled linux-like universe)")


def cmd_gen_universe(args) -> int:
    if args.planted:
        u = generate_planted_universe(args.n, args.planted, args.seed, args.explicit_density, args.base_coverage)
    else:
        u = generate_synthetic_universe(
            args.n, args.explicit_density, args.implicit_density, args.seed, args.base_coverage, args.name
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_universe(u, out)
    RunManifest("gen-universe", _config_of(args), {"seed": args.seed}, {}, {"universe": str(out)}).write(
        out.with_name(out.name + ".manifest.json")
    )
    print(f"{out}: {u.n} syscalls, {len(u.deps.explicit)} explicit, {len(u.deps.implicit)} implicit")
    return 0


def cmd_train(args) -> int:
    universe = load_universe(args.universe)
    agent_config = AgentConfig(
        gamma=args.gamma,
        learning_rate=args.lr,
        epsilon_start=args.eps_start,
        epsilon_decay_steps=args.eps_decay_steps,
        replay_capacity=args.replay_capacity,
        batch_size=args.batch_size,
        target_sync_interval=args.target_sync,
        hidden=tuple(args.hidden),
    )
    episode_config = EpisodeConfig(
        t1=args.t1,
        t2=args.t2,
        max_steps_per_episode=args.max_steps,
        episodes=args.episodes,
        trace_len=args.trace_len,
        revert_decreasing=args.revert_decreasing,
    )
    out = Path(args.out)
    if args.oracle == "remote":
        if not args.endpoint:
            raise CliError("--oracle remote needs --endpoint HOST:PORT")
        oracle = RemoteOracle(args.endpoint, universe, timeout=args.timeout)
    else:
        oracle = SimulatedOracle(universe, _oracle_config(args))
    try:
        summary, _, _ = train(universe, oracle, agent_config, episode_config, out, seed=args.seed)
    finally:
        if isinstance(oracle, RemoteOracle):
            oracle.close()
    RunManifest(
        "train", _config_of(args), {"seed": args.seed, "oracle_seed": args.oracle_seed},
        {"universe": str(args.universe)},
        {k: str(out / k) for k in ("archive.corpus", "loss.csv", "episodes.csv", "summary.json")},
    ).write(out / "manifest.json")
    print(f"{summary.episodes} episodes, {summary.steps} steps, {summary.archived} archived "
          f"(best coverage {summary.best_coverage}) -> {out}")
    return 0


def cmd_export(args) -> int:
    universe = load_universe(args.universe)
    archive = read_corpus(args.archive, universe)
    corpus = sample_corpus(archive, args.count, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, out, universe)
    RunManifest("export", _config_of(args), {"seed": args.seed},
                {"archive": str(args.archive), "universe": str(args.universe)},
                {"corpus": str(out)}).write(out.with_name(out.name + ".manifest.json"))
    print(f"exported {len(corpus)} of {len(archive)} archived traces ({corpus.num_calls} calls) -> {out}")
    return 0


def cmd_analyze(args) -> int:
    universe = load_universe(args.universe)
    corpora = [read_corpus(p, universe) for p in args.corpora]
    labels = args.labels or [Path(p).stem for p in args.corpora]
    if len(labels) != len(corpora):
        raise CliError("--labels needs one label per corpus")
    reports = [analyze(c, universe) for c in corpora]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = {"seed_report.csv": out / "seed_report.csv", "seed_report.txt": out / "seed_report.txt",
               "usage_histogram.csv": out / "usage_histogram.csv"}
    text = compare_report(reports, labels)
    outputs["seed_report.txt"].write_text(text)
    outputs["seed_report.csv"].write_text(compare_report(reports, labels, fmt="csv"))
    outputs["usage_histogram.csv"].write_text(
        histogram_csv([np.array(r.usage_histogram) for r in reports], labels, universe.names)
    )
    print(text, end="")
    if len(corpora) > 1:
        outputs["agreement.csv"] = out / "agreement.csv"
        with open(outputs["agreement.csv"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "b", "equivalent_pairs", "matched_a", "pct_a", "matched_b", "pct_b"])
            for i in range(len(corpora)):
                for j in range(i + 1, len(corpora)):
                    ag = agreement(corpora[i], corpora[j])
                    w.writerow([labels[i], labels[j], ag.equivalent_pairs, ag.matched_a,
                                f"{ag.pct_a:.1f}", ag.matched_b, f"{ag.pct_b:.1f}"])
                    print(f"{labels[i]} ~ {labels[j]}: {ag.equivalent_pairs} equivalent pairs, "
                          f"{ag.matched_a} ({ag.pct_a:.1f}%) / {ag.matched_b} ({ag.pct_b:.1f}%) traces matched")
    RunManifest("analyze", _config_of(args), {}, {"universe": str(args.universe),
                "corpora": [str(p) for p in args.corpora]},
                {k: str(v) for k, v in outputs.items()}).write(out / "manifest.json")
    return 0


def parse_lengths(spec: str) -> list[int]:
    """``"2-9"`` or ``"2,3,5"``."""
    try:
        if "-" in spec:
            lo, hi = (int(x) for x in spec.split("-", 1))
            lengths = list(range(lo, hi + 1))
        else:
            lengths = [int(x) for x in spec.split(",")]
    except ValueError:
        raise CliError(f"invalid length range {spec!r}") from None
    if not lengths or min(lengths) < 1:
        raise CliError(f"invalid length range {spec!r}")
    return lengths


def bench_length(universe, oracle_config: OracleConfig, lengths, budget: int, seed: int) -> list[dict]:
    """Random traces of each length, ``floor(budget / length)`` of them, scored
    by the simulator."""
    oracle = SimulatedOracle(universe, oracle_config)
    rows = []
    for length in lengths:
        count = budget // length
        if count < 1:
            raise CliError(f"budget {budget} is smaller than trace length {length}")
        rng = np.random.default_rng([seed, length])
        traces = [random_trace(length, universe.n, rng) for _ in range(count)]
        totals = [oracle.evaluate(t).total for t in traces]
        report = analyze(pack_corpus(traces, universe, trace_len=length), universe)
        rows.append({
            "length": length,
            "traces": count,
            "calls": count * length,
            "total_coverage": sum(totals),
            "mean_trace_coverage": f"{sum(totals) / count:.4f}",
            "unique_syscalls": report.unique_syscalls,
            "explicit_satisfied": report.explicit_satisfied,
            "implicit_satisfied": report.implicit_satisfied,
        })
    return rows


def cmd_bench_length(args) -> int:
    universe = load_universe(args.universe)
    rows = bench_length(universe, _oracle_config(args), parse_lengths(args.lengths), args.budget, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench_length.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    RunManifest("bench-length", _config_of(args), {"seed": args.seed, "oracle_seed": args.oracle_seed},
                {"universe": str(args.universe)}, {"csv": str(out / "bench_length.csv")}).write(
        out / "manifest.json")
    for r in rows:
        print(f"L={r['length']}: {r['traces']} traces, total coverage {r['total_coverage']}")
    return 0


def cmd_mock_server(args) -> int:
    universe = load_universe(args.universe)
    host, _, port = args.bind.rpartition(":")
    server = MockServer(SimulatedOracle(universe, _oracle_config(args)), host or "127.0.0.1", int(port))
    print(f"serving protocol v1 for {universe.universe_id} on {server.endpoint}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server._server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracesynth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-universe", help="write a synthetic universe file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--explicit-density", type=float, default=0.1)
    p.add_argument("--implicit-density", type=float, default=0.1)
    p.add_argument("--base-coverage", type=int, default=50)
    p.add_argument("--planted", type=int, default=0, metavar="L",
                   help="plant an optimal group of L calls (background density from --explicit-density)")
    p.add_argument("--name", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_universe)

    p = sub.add_parser("train", help="train the agent and archive optimal traces")
    _add_universe_flag(p)
    p.add_argument("--episodes", type=int, default=480)
    p.add_argument("--trace-len", type=int, default=DEFAULT_TRACE_LEN)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t1", type=float, default=10.0)
    p.add_argument("--t2", type=float, default=-5.0)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--eps-start", type=float, default=0.95)
    p.add_argument("--eps-decay-steps", type=int, default=10_000)
    p.add_argument("--max-steps", type=int, default=200, help="step cap per episode")
    p.add_argument("--replay-capacity", type=int, default=10_000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--target-sync", type=int, default=200)
    p.add_argument("--hidden", type=int, nargs=2, default=[512, 512])
    p.add_argument("--revert-decreasing", action="store_true",
                   help="keep the old trace when a replacement lowers coverage")
    p.add_argument("--oracle", choices=("sim", "remote"), default="sim")
    p.add_argument("--endpoint", help="HOST:PORT of a protocol v1 fuzzer agent")
    p.add_argument("--timeout", type=float, default=30.0)
    _add_oracle_flags(p)
    p.add_argument("--out", default="runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="sample a seed corpus from a training archive")
    _add_universe_flag(p)
    p.add_argument("--archive", required=True)
    p.add_argument("--count", type=int, default=1526)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("analyze", help="seed-quality metrics for one or more corpora")
    _add_universe_flag(p)
    p.add_argument("corpora", nargs="+")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--out", default="runs/analyze")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench-length", help="coverage of random traces vs trace length")
    _add_universe_flag(p)
    p.add_argument("--lengths", default="2-9")
    p.add_argument("--budget", type=int, default=7679, help="total calls per length")
    p.add_argument("--seed", type=int, default=0)
    _add_oracle_flags(p)
    p.add_argument("--out", default="runs/bench-length")
    p.set_defaults(func=cmd_bench_length)

    p = sub.add_parser("mock-server", help="serve the simulated kernel over protocol v1")
    _add_universe_flag(p)
    p.add_argument("--bind", default="127.0.0.1:7070")
    _add_oracle_flags(p)
    p.set_defaults(func=cmd_mock_server)
    return parser


def _setup_logging(subcommand: str) -> None:
    level = os.environ.get("TRACESYNTH_LOG")
    if level is None:
        level = "INFO" if subcommand == "mock-server" else "WARNING"
    logging.basicConfig(level=level.upper(), format="%(asctime)s %(name)s %(levelname)s %(message)s")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.subcommand)
    try:
        return args.func(args)
    except (CliError, OSError, ValueError, OracleError, FloatingPointError) as exc:
        print(f"tracesynth {args.subcommand}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
