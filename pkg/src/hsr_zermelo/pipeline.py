"""Self-play training loop: episodes, replay buffers, training, arena, metrics."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import game, oracle
from .evaluators import NetEvaluator, normalise
from .game import GameState, MoveRecord, Phase, Player, Role
from .mcts import SearchConfig, search
from .network import ROLE_OP, ROLE_P, NetConfig, PolicyValueNet
from .oracle import Judgment

log = logging.getLogger(__name__)

PROPOSAL = "proposal"
REFUTATION = "refutation"


@dataclass(frozen=True)
class GameConfig:
    """Either a complete game (``mode='complete'``, uses ``n_max``) or a
    fixed-``n`` refutation game (``mode='refutation'``, uses ``n``)."""

    mode: str
    k: int
    q: int
    n: int = 0
    n_max: int = 0

    def __post_init__(self):
        if self.mode not in ("complete", "refutation"):
            raise ValueError(f"unknown game mode {self.mode!r}")
        if self.mode == "complete" and self.n_max < 2:
            raise ValueError("complete games need n_max >= 2")
        if self.mode == "refutation" and self.n < 1:
            raise ValueError("refutation games need n >= 1")

    @property
    def complete(self) -> bool:
        return self.mode == "complete"

    @property
    def bound(self) -> int:
        """The ``n_max`` used for head sizes and input scaling."""
        return self.n_max if self.complete else max(self.n, 2)

    @property
    def p_size(self) -> int:
        return self.bound + 1

    def root(self) -> GameState:
        if self.complete:
            return game.initial_state(self.k, self.q, self.n_max)
        return game.refutation_state(self.k, self.q, self.n, Player.FIRST, self.bound)


@dataclass(frozen=True)
class PipelineConfig:
    episodes: int = 100
    arena_rounds: int = 20
    search: SearchConfig = SearchConfig()
    selfplay_temperature: float = 1.0
    arena_temperature: float = 0.0
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-2
    momentum: float = 0.9
    buffer_iterations: int = 20
    gate_threshold: Optional[float] = None
    oracle_probe_rounds: int = 0
    dedupe_deterministic_arena: bool = True
    seed: int = 0


@dataclass
class TrainingExample:
    features: np.ndarray
    phase: str
    role: Role
    pi: np.ndarray
    mover: Player
    z: float = 0.0


class ReplayBuffer:
    """FIFO of per-iteration example batches; keeps the last ``capacity`` iterations."""

    def __init__(self, phase: str, capacity: int = 20):
        self.phase = phase
        self.capacity = capacity
        self._chunks: deque = deque(maxlen=capacity)

    def add_iteration(self, examples: Sequence[TrainingExample]) -> None:
        for ex in examples:
            if ex.phase != self.phase:
                raise ValueError(f"{ex.phase} example routed to the {self.phase} buffer")
        self._chunks.append(list(examples))

    def __len__(self) -> int:
        return sum(len(c) for c in self._chunks)

    def examples(self) -> List[TrainingExample]:
        return [ex for chunk in self._chunks for ex in chunk]

    def arrays(self, p_size: int):
        exs = self.examples()
        x = np.array([ex.features for ex in exs], dtype=np.float64).reshape(len(exs), 5)
        role = np.array([ROLE_P if ex.role is Role.P else ROLE_OP for ex in exs], dtype=np.int64)
        pi = np.zeros((len(exs), p_size))
        for i, ex in enumerate(exs):
            pi[i, :len(ex.pi)] = ex.pi
        z = np.array([ex.z for ex in exs], dtype=np.float64)
        return x, role, pi, z

    def chunks(self) -> List[List[TrainingExample]]:
        return [list(c) for c in self._chunks]


@dataclass
class GameTrace:
    moves: List[MoveRecord]
    agents: Dict[Player, str]
    winner: Player
    inserted: List[List[GameState]]

    def accessed_states(self) -> int:
        seen = set()
        for chunk in self.inserted:
            seen.update(chunk)
        return len(seen)


class Agent:
    name = "agent"

    def select(self, s: GameState, rng: np.random.Generator):
        """Returns ``(action, search_result_or_None)``."""
        raise NotImplementedError


class MCTSAgent(Agent):
    def __init__(self, evaluator, cfg: SearchConfig, name: str = "mcts"):
        self.evaluator = evaluator
        self.cfg = cfg
        self.name = name

    def select(self, s, rng):
        result = search(s, self.evaluator, self.cfg, rng)
        if self.cfg.temperature == 0:
            idx = int(np.argmax(result.policy))
        else:
            idx = int(rng.choice(len(result.policy), p=result.policy))
        return result.actions[idx], result


class OracleAgent(Agent):
    name = "oracle"

    def select(self, s, rng):
        return oracle.optimal_action(s), None


def play_game(root: GameState, agents: Mapping[Player, Agent], rng: np.random.Generator,
              on_move=None) -> GameTrace:
    s = root
    moves: List[MoveRecord] = []
    inserted: List[List[GameState]] = []
    if root.phase is Phase.TERMINAL:
        inserted.append([root])
    while s.phase is not Phase.TERMINAL:
        who = game.mover(s)
        action, result = agents[who].select(s, rng)
        rec = MoveRecord(s, who, game.role_of(s, who), action)
        moves.append(rec)
        inserted.append(result.inserted if result is not None else [])
        if on_move is not None:
            on_move(rec, result)
        s = game.apply(s, action)
    return GameTrace(moves, {p: a.name for p, a in agents.items()}, s.winner, inserted)


def run_episode(evaluator, gcfg: GameConfig, pcfg: PipelineConfig,
                rng: np.random.Generator) -> Tuple[List[TrainingExample], GameTrace]:
    """One self-play game at the self-play temperature; examples get ``z`` at the end."""
    scfg = replace(pcfg.search, temperature=pcfg.selfplay_temperature)
    agent = MCTSAgent(evaluator, scfg, name="self")
    examples: List[TrainingExample] = []

    def record(rec: MoveRecord, result):
        s = rec.state_before
        phase = PROPOSAL if game.is_proposal_phase(s) else REFUTATION
        head = np.zeros(gcfg.p_size if rec.actor_role is Role.P else 2)
        for a, p in zip(result.actions, result.policy):
            head[a.head_index] = p
        feats = normalise(game.encode(s), gcfg.k, gcfg.q, gcfg.bound)
        examples.append(TrainingExample(feats, phase, rec.actor_role, head, rec.actor))

    trace = play_game(gcfg.root(), {Player.FIRST: agent, Player.SECOND: agent}, rng, record)
    for ex in examples:
        ex.z = 1.0 if ex.mover == trace.winner else -1.0
    return examples, trace


def correctness_ratio(traces: Sequence[GameTrace], agent: str, role: Role,
                      phase: Optional[str] = None) -> Optional[float]:
    """Share of that agent's moves in that role judged Correct; None without moves.

    Moves from doomed positions (no correct action) count as incorrect.
    """
    total = good = 0
    for tr in traces:
        for rec in tr.moves:
            if tr.agents[rec.actor] != agent or rec.actor_role is not role:
                continue
            if phase is not None and (PROPOSAL if game.is_proposal_phase(rec.state_before)
                                      else REFUTATION) != phase:
                continue
            total += 1
            good += oracle.classify_move(rec) is Judgment.CORRECT
    return good / total if total else None


_coverage_totals: Dict[Tuple[int, int, int], Optional[int]] = {}


def total_states(gcfg: GameConfig, budget: int = 2_000_000) -> Optional[int]:
    if gcfg.complete:
        return None
    key = (gcfg.k, gcfg.q, gcfg.n)
    if key not in _coverage_totals:
        try:
            _coverage_totals[key] = oracle.enumerate_states(*key, budget=budget)[0]
        except oracle.BudgetExceededError:
            _coverage_totals[key] = None
    return _coverage_totals[key]


def coverage_metrics(traces: Sequence[GameTrace], gcfg: GameConfig):
    """``(mean accessed, max accessed, ratio)`` over episodes; ratio is None if the total is unknown."""
    if not traces:
        return None, None, None
    counts = [tr.accessed_states() for tr in traces]
    mean = float(np.mean(counts))
    total = total_states(gcfg)
    return mean, int(max(counts)), (mean / total if total else None)


@dataclass
class IterationReport:
    iteration: int
    episodes: int
    new_P_correct: Optional[float]
    new_OP_correct: Optional[float]
    old_P_correct: Optional[float]
    old_OP_correct: Optional[float]
    mean_states: Optional[float]
    coverage_ratio: Optional[float]
    max_states: Optional[int] = None
    selfplay_P_correct: Optional[float] = None
    selfplay_OP_correct: Optional[float] = None
    phase_correct: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)
    arena_games: int = 0
    new_wins: int = 0
    old_wins: int = 0
    new_as_P_wins: int = 0
    new_as_P_games: int = 0
    new_as_OP_wins: int = 0
    new_as_OP_games: int = 0
    oracle_probe: Dict[str, Optional[float]] = field(default_factory=dict)
    proposals: Dict[str, int] = field(default_factory=dict)
    decision_probe: Dict[str, str] = field(default_factory=dict)
    buffer_sizes: Dict[str, int] = field(default_factory=dict)
    losses: Dict[str, Dict[str, float]] = field(default_factory=dict)
    accepted: bool = True
    empty: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


class Pipeline:
    """Owns the current networks, replay buffers and RNG of one training run."""

    def __init__(self, gcfg: GameConfig, pcfg: PipelineConfig,
                 net_overrides: Optional[dict] = None):
        self.gcfg = gcfg
        self.pcfg = pcfg
        overrides = dict(net_overrides or {})
        seed = pcfg.seed
        self.refutation_net = PolicyValueNet(NetConfig(p_size=gcfg.p_size, seed=seed, **overrides))
        self.proposal_net = (PolicyValueNet(NetConfig(p_size=gcfg.p_size, seed=seed + 1, **overrides))
                             if gcfg.complete else None)
        self.buffers = {REFUTATION: ReplayBuffer(REFUTATION, pcfg.buffer_iterations),
                        PROPOSAL: ReplayBuffer(PROPOSAL, pcfg.buffer_iterations)}
        self.rng = np.random.default_rng(seed)
        self.iteration = 0

    def evaluator(self, refutation_net=None, proposal_net=None) -> NetEvaluator:
        g = self.gcfg
        return NetEvaluator(refutation_net or self.refutation_net, g.k, g.q, g.bound,
                            proposal_net or self.proposal_net)

    # -- phases ---------------------------------------------------------------

    def self_play(self, episodes: int, rng: np.random.Generator):
        ev = self.evaluator()
        new_examples = {REFUTATION: [], PROPOSAL: []}
        traces = []
        for _ in range(episodes):
            examples, trace = run_episode(ev, self.gcfg, self.pcfg, rng)
            for ex in examples:
                new_examples[ex.phase].append(ex)
            traces.append(trace)
        return new_examples, traces

    def train(self) -> Dict[str, Dict[str, float]]:
        p = self.pcfg
        losses = {}
        new_ref = self.refutation_net.copy()
        new_prop = self.proposal_net.copy() if self.proposal_net is not None else None
        for phase, net in ((REFUTATION, new_ref), (PROPOSAL, new_prop)):
            buf = self.buffers[phase]
            if net is None or len(buf) == 0:
                continue
            x, role, pi, z = buf.arrays(self.gcfg.p_size)
            losses[phase] = net.fit(x, role, pi, z, epochs=p.epochs, batch_size=p.batch_size,
                                    lr=p.lr, momentum=p.momentum)
        return new_ref, new_prop, losses

    def arena(self, new_ev, old_ev, rng) -> List[GameTrace]:
        """New network as OP for ``arena_rounds`` games, then as P for as many."""
        p = self.pcfg
        scfg = replace(p.search, temperature=p.arena_temperature)
        new = MCTSAgent(new_ev, scfg, "new")
        old = MCTSAgent(old_ev, scfg, "old")
        traces = []
        for seating in ({Player.FIRST: old, Player.SECOND: new},
                        {Player.FIRST: new, Player.SECOND: old}):
            traces.extend(self._rounds(seating, p.arena_rounds, scfg, rng))
        return traces

    def _rounds(self, seating, rounds, scfg, rng) -> List[GameTrace]:
        deterministic = (scfg.temperature == 0 and scfg.dirichlet_alpha == 0
                         and self.pcfg.dedupe_deterministic_arena)
        if rounds <= 0:
            return []
        if deterministic:
            # identical inputs give identical games; play once
            return [play_game(self.gcfg.root(), seating, rng)] * rounds
        return [play_game(self.gcfg.root(), seating, rng) for _ in range(rounds)]

    def oracle_probe(self, new_ev, rng) -> Dict[str, Optional[float]]:
        p = self.pcfg
        if p.oracle_probe_rounds <= 0:
            return {}
        scfg = replace(p.search, temperature=p.arena_temperature)
        new = MCTSAgent(new_ev, scfg, "new")
        orc = OracleAgent()
        as_op = self._rounds({Player.FIRST: orc, Player.SECOND: new}, p.oracle_probe_rounds, scfg, rng)
        as_p = self._rounds({Player.FIRST: new, Player.SECOND: orc}, p.oracle_probe_rounds, scfg, rng)
        return {
            "new_as_OP_win_rate": sum(t.winner == Player.SECOND for t in as_op) / len(as_op),
            "new_as_P_win_rate": sum(t.winner == Player.FIRST for t in as_p) / len(as_p),
            "new_P_correct_vs_oracle": correctness_ratio(as_p, "new", Role.P),
            "new_OP_correct_vs_oracle": correctness_ratio(as_op, "new", Role.OP),
        }

    def decision_probe(self, new_ev, rng) -> Dict[str, str]:
        """The new decider's move at every ``Decision(n)`` of a complete game."""
        if not self.gcfg.complete:
            return {}
        scfg = replace(self.pcfg.search, temperature=0.0)
        agent = MCTSAgent(new_ev, scfg, "new")
        root = self.gcfg.root()
        out = {}
        for n in range(1, self.gcfg.n_max + 1):
            s = game.apply(root, game.propose(n))
            action, _ = agent.select(s, rng)
            out[str(n)] = str(action)
        return out

    # -- iteration ------------------------------------------------------------

    def run_iteration(self) -> IterationReport:
        p = self.pcfg
        it = self.iteration
        rng = self.rng
        if p.episodes == 0:
            self.iteration += 1
            return IterationReport(it, 0, None, None, None, None, None, None,
                                   buffer_sizes={k: len(b) for k, b in self.buffers.items()},
                                   accepted=False, empty=True)

        new_examples, sp_traces = self.self_play(p.episodes, rng)
        for phase, exs in new_examples.items():
            if exs or phase == REFUTATION or self.gcfg.complete:
                self.buffers[phase].add_iteration(exs)

        new_ref, new_prop, losses = self.train()
        old_ev = self.evaluator()
        new_ev = self.evaluator(new_ref, new_prop)
        arena = self.arena(new_ev, old_ev, rng)

        new_wins = sum(t.agents[t.winner] == "new" for t in arena)
        accepted = True
        if p.gate_threshold is not None and arena:
            accepted = new_wins / len(arena) >= p.gate_threshold

        as_p = [t for t in arena if t.agents[Player.FIRST] == "new"]
        as_op = [t for t in arena if t.agents[Player.SECOND] == "new"]
        mean_states, max_states, ratio = coverage_metrics(sp_traces, self.gcfg)

        phase_correct = {}
        if self.gcfg.complete:
            for ph in (PROPOSAL, REFUTATION):
                phase_correct[ph] = {f"{a}_{r.value}": correctness_ratio(arena, a, r, ph)
                                     for a in ("new", "old") for r in (Role.P, Role.OP)}
        proposals: Dict[str, int] = {}
        for t in as_p:
            first = t.moves[0].action
            if first.kind is game.Kind.PROPOSE:
                proposals[str(first.value)] = proposals.get(str(first.value), 0) + 1

        report = IterationReport(
            iteration=it,
            episodes=p.episodes,
            new_P_correct=correctness_ratio(arena, "new", Role.P),
            new_OP_correct=correctness_ratio(arena, "new", Role.OP),
            old_P_correct=correctness_ratio(arena, "old", Role.P),
            old_OP_correct=correctness_ratio(arena, "old", Role.OP),
            mean_states=mean_states,
            coverage_ratio=ratio,
            max_states=max_states,
            selfplay_P_correct=correctness_ratio(sp_traces, "self", Role.P),
            selfplay_OP_correct=correctness_ratio(sp_traces, "self", Role.OP),
            phase_correct=phase_correct,
            arena_games=len(arena),
            new_wins=new_wins,
            old_wins=len(arena) - new_wins,
            new_as_P_wins=sum(t.agents[t.winner] == "new" for t in as_p),
            new_as_P_games=len(as_p),
            new_as_OP_wins=sum(t.agents[t.winner] == "new" for t in as_op),
            new_as_OP_games=len(as_op),
            oracle_probe=self.oracle_probe(new_ev, rng),
            proposals=proposals,
            decision_probe=self.decision_probe(new_ev, rng),
            buffer_sizes={k: len(b) for k, b in self.buffers.items()},
            losses=losses,
            accepted=accepted,
        )
        if accepted:
            self.refutation_net, self.proposal_net = new_ref, new_prop
        self.iteration += 1
        log.info("iteration %d: new_P=%s new_OP=%s old_P=%s old_OP=%s new_wins=%d/%d states=%s",
                 it, report.new_P_correct, report.new_OP_correct, report.old_P_correct,
                 report.old_OP_correct, new_wins, len(arena), mean_states)
        return report

