"""Command-line entry point: ``hsr-zermelo {train,arena,play,oracle,enumerate,export,presets}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import game, oracle, store
from .evaluators import NetEvaluator, UniformEvaluator
from .game import Phase, Player
from .mcts import SearchConfig
from .pipeline import Agent, GameConfig, MCTSAgent, OracleAgent, Pipeline, correctness_ratio, play_game

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_BUDGET = 4

PAPER_STATE_COUNT = 4257

log = logging.getLogger("hsr_zermelo")


# ------------------------------------------------------------------ train

def _train_config(args) -> cfgmod.RunConfig:
    file_values = cfgmod.load_config_file(args.config) if args.config else None
    overrides = cfgmod.parse_pairs(args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    return cfgmod.build(args.preset, file_values, overrides).validate(training=True)


def cmd_train(args) -> int:
    cfg = _train_config(args)
    run = Path(cfg.out_dir)
    run.mkdir(parents=True, exist_ok=True)
    snapshot = run / "config.txt"
    if args.resume and snapshot.is_file():
        saved = cfgmod.build(file_values=cfgmod.load_config_file(snapshot))
        if replace(saved, iterations=cfg.iterations, out_dir=cfg.out_dir) != cfg:
            raise cfgmod.ConfigError(f"{snapshot} differs from the requested configuration")
    snapshot.write_text(cfgmod.to_text(cfg))

    pipe = Pipeline(cfg.game_config(), cfg.pipeline_config(), cfg.net_overrides())
    metrics = run / "metrics.jsonl"
    ckpts = store.checkpoint_dirs(run)
    if args.resume and ckpts:
        store.restore_pipeline(pipe, ckpts[-1])
        # drop metrics written after the snapshot we resume from
        rows = store.read_metrics(run) if metrics.is_file() else []
        rows = [r for r in rows if r["iteration"] < pipe.iteration]
        metrics.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
        log.info("resuming %s at iteration %d", run, pipe.iteration)
    else:
        metrics.write_text("")
        for d in ckpts:
            for f in d.iterdir():
                f.unlink()
            d.rmdir()

    reports = []
    with metrics.open("a") as sink:
        while pipe.iteration < cfg.iterations:
            report = pipe.run_iteration()
            sink.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
            sink.flush()
            store.save_pipeline(pipe, run)
            reports.append(report)
            print(f"iter {report.iteration}: new_P={_pct(report.new_P_correct)} "
                  f"new_OP={_pct(report.new_OP_correct)} old_P={_pct(report.old_P_correct)} "
                  f"old_OP={_pct(report.old_OP_correct)} new_wins={report.new_wins}/{report.arena_games} "
                  f"states={report.mean_states}")
    rows = store.read_metrics(run)
    summary = {"iterations": len(rows), "config": cfgmod.to_text(cfg),
               "final": rows[-1] if rows else None}
    (run / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _pct(v):
    return "-" if v is None else f"{v:.2f}"


# ------------------------------------------------------------------ agents

class HumanAgent(Agent):
    name = "human"

    def __init__(self, stream_in=None, stream_out=None):
        self.stream_in = stream_in or sys.stdin
        self.stream_out = stream_out or sys.stdout

    def select(self, s, rng):
        legal = game.legal_actions(s)
        while True:
            self.stream_out.write(f"{s} your move> ")
            self.stream_out.flush()
            line = self.stream_in.readline()
            if not line:
                raise EOFError("input closed")
            text = line.strip()
            try:
                action = (game.test(int(text)) if s.phase is Phase.CLAIMER_TEST and text.isdigit()
                          else game.propose(int(text)) if s.phase is Phase.PROPOSAL and text.isdigit()
                          else game.parse_action(text))
            except ValueError:
                self.stream_out.write(f"cannot parse {text!r}\n")
                continue
            if action in legal:
                return action, None
            self.stream_out.write(f"illegal move {action}; legal: {legal[0]} .. {legal[-1]}\n")


def make_agent(spec: str, gcfg: GameConfig, scfg: SearchConfig, name: str, stdin=None, stdout=None):
    if spec == "oracle":
        agent = OracleAgent()
    elif spec == "human":
        agent = HumanAgent(stdin, stdout)
    elif spec == "uniform":
        agent = MCTSAgent(UniformEvaluator(), scfg)
    else:
        path = Path(spec)
        if path.is_dir() and path.name == "checkpoints" or (path / "checkpoints").is_dir():
            dirs = store.checkpoint_dirs(path if path.name != "checkpoints" else path.parent)
            if not dirs:
                raise FileNotFoundError(f"no checkpoints under {spec}")
            path = dirs[-1]
        ref, prop = store.load_agent(path)
        ev = NetEvaluator(ref, gcfg.k, gcfg.q, gcfg.bound, prop)
        agent = MCTSAgent(ev, scfg)
    agent.name = name
    return agent


def _game_from_args(args) -> GameConfig:
    if args.n_max is not None:
        return GameConfig("complete", args.k, args.q, n_max=args.n_max)
    if args.n is None:
        raise cfgmod.ConfigError("give --n for a refutation game or --n-max for a complete game")
    return GameConfig("refutation", args.k, args.q, n=args.n)


# ------------------------------------------------------------------ play / arena

def cmd_play(args, stdin=None, stdout=None) -> int:
    out = stdout or sys.stdout
    gcfg = _game_from_args(args)
    scfg = SearchConfig(simulations=args.simulations, temperature=0.0)
    agents = {Player.FIRST: make_agent(args.first, gcfg, scfg, "first", stdin, out),
              Player.SECOND: make_agent(args.second, gcfg, scfg, "second", stdin, out)}
    counter = [0]

    def show(rec, result):
        counter[0] += 1
        verdict = oracle.classify_move(rec).value
        out.write(f"{counter[0]:3d}. {rec.actor.name:<6} ({rec.actor_role.value:<2}) "
                  f"{rec.state_before} -> {rec.action}  [{verdict}]\n")

    trace = play_game(gcfg.root(), agents, np.random.default_rng(args.seed), show)
    out.write(f"winner: {trace.winner.name}\n")
    return EXIT_OK


def cmd_arena(args) -> int:
    gcfg = _game_from_args(args)
    scfg = SearchConfig(simulations=args.simulations, temperature=0.0)
    a = make_agent(args.a, gcfg, scfg, "a")
    b = make_agent(args.b, gcfg, scfg, "b")
    rng = np.random.default_rng(args.seed)
    traces = []
    for seating in ({Player.FIRST: b, Player.SECOND: a}, {Player.FIRST: a, Player.SECOND: b}):
        traces += [play_game(gcfg.root(), seating, rng) for _ in range(args.rounds)]
    result = {"games": len(traces),
              "a_wins": sum(t.agents[t.winner] == "a" for t in traces),
              "b_wins": sum(t.agents[t.winner] == "b" for t in traces)}
    for agent in ("a", "b"):
        for role in (game.Role.P, game.Role.OP):
            result[f"{agent}_{role.value}_correct"] = correctness_ratio(traces, agent, role)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------ oracle / enumerate / export

def _fmt_range(r: range) -> str:
    return f"[{r.start},{r.stop - 1}]" if len(r) else "[] (none)"


def _fmt_set(acts) -> str:
    order = [game.BREAK, game.NOT_BREAK, game.ACCEPT, game.REJECT]
    return "{" + ", ".join(str(a) for a in order if a in acts) + "}"


def cmd_oracle(args) -> int:
    k, q = args.k, args.q
    if args.n is None:
        print(oracle.Triangle(k, q).format())
        return EXIT_OK
    n = args.n
    best = oracle.bernoulli(k, q)
    print(f"N({k},{q}) = {best}; claimer {'wins' if oracle.claimer_wins(k, q, n) else 'loses'} at n={n}")
    if n == 1 or k == 0 or q == 0:
        print("position is terminal")
        return EXIT_OK
    if args.m is None:
        print(f"correct tests: {_fmt_range(oracle.correct_tests(k, q, n))}")
        if n <= best:
            print(f"optimal test: {oracle.optimal_action(game.refutation_state(k, q, n, Player.FIRST))}")
    else:
        print(f"correct answers: {_fmt_set(oracle.correct_answers(k, q, n, args.m))}")
    print(f"correct decision on proposal n={n}: {_fmt_set(oracle.correct_decision(k, q, n))}")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    count, states = oracle.enumerate_states(args.k, args.q, args.n, budget=args.budget)
    counts = oracle.state_counts(states)
    print(f"reachable states from ({args.k},{args.q},{args.n}): {count}")
    for name, value in counts.items():
        print(f"  {name}: {value}")
    if (args.k, args.q, args.n) == (7, 7, 128):
        match = [name for name, v in counts.items() if v == PAPER_STATE_COUNT]
        print(f"reference total {PAPER_STATE_COUNT}: "
              + (f"matches convention {match[0]}" if match else "no convention matches"))
    return EXIT_OK


def cmd_export(args) -> int:
    rows = store.read_metrics(args.run_dir)
    if not rows:
        raise FileNotFoundError(f"{args.run_dir}/metrics.jsonl has no iterations")
    text = store.export_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_presets(args) -> int:
    for name, values in cfgmod.PRESETS.items():
        print(f"{name}: " + " ".join(f"{k}={v}" for k, v in values.items()))
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _game_args(p):
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n", type=int, help="fixed candidate count (refutation game)")
    p.add_argument("--n-max", type=int, help="proposal bound (complete game)")
    p.add_argument("--simulations", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsr-zermelo",
                                     description="Self-play solver for the highest-safe-rung game.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run self-play training iterations")
    p.add_argument("--preset", choices=sorted(cfgmod.PRESETS))
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--out", help="run directory")
    p.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("play", help="play one game and judge every move")
    _game_args(p)
    p.add_argument("--first", default="oracle", help="oracle | human | uniform | checkpoint dir")
    p.add_argument("--second", default="oracle", help="oracle | human | uniform | checkpoint dir")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("arena", help="pit two agents against each other in both seats")
    _game_args(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--rounds", type=int, default=20)
    p.set_defaults(func=cmd_arena)

    p = sub.add_parser("oracle", help="print N(k,q) or the correct moves at a position")
    p.add_argument("k", type=int)
    p.add_argument("q", type=int)
    p.add_argument("n", type=int, nargs="?")
    p.add_argument("m", type=int, nargs="?")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("enumerate", help="count reachable states of a refutation game")
    p.add_argument("k", type=int)
    p.add_argument("q", type=int)
    p.add_argument("n", type=int)
    p.add_argument("--budget", type=int, default=5_000_000)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("export", help="write plot-ready CSV from a run's metrics")
    p.add_argument("run_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("presets", help="list experiment presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, game.IllegalActionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except oracle.BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (OSError, EOFError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
