"""PUCT Monte-Carlo tree search.

Edge values are stored from the perspective of the player moving at the
edge's source node. Backup compares each node's mover with the leaf's
reference player instead of flipping signs by ply parity, because a reject
lets the same player move twice in a row.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import game, kernels
from .game import Action, GameState, Phase, Player

PRIOR_FLOOR = 1e-8


@dataclass(frozen=True)
class SearchConfig:
    simulations: int = 50
    c_puct: float = 1.0
    temperature: float = 1.0
    tie_break: str = "lowest_index"
    seed: int = 0
    theoretical_exploration: bool = False
    dirichlet_alpha: float = 0.0
    dirichlet_weight: float = 0.25

    def __post_init__(self):
        if self.simulations < 1:
            raise ValueError("simulations must be >= 1")
        if self.c_puct <= 0:
            raise ValueError("c_puct must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.tie_break != "lowest_index":
            raise ValueError(f"unknown tie-break rule {self.tie_break!r}")


class Node:
    """Expanded non-terminal state with per-edge statistics."""

    __slots__ = ("state", "mover", "actions", "prior", "visits", "value_sum", "q", "children")

    def __init__(self, state: GameState, actions: Sequence[Action], prior: np.ndarray):
        self.state = state
        self.mover = game.mover(state)
        self.actions = actions
        size = len(actions)
        self.prior = prior
        self.visits = np.zeros(size)
        self.value_sum = np.zeros(size)
        self.q = np.zeros(size)
        self.children: List[object] = [None] * size

    @classmethod
    def from_counts(cls, visits, value_sum, prior) -> "Node":
        """Bare statistics holder, detached from any game state (for inspection and tests)."""
        node = cls.__new__(cls)
        node.state = None
        node.mover = None
        node.actions = tuple(range(len(prior)))
        node.prior = np.asarray(prior, dtype=np.float64)
        node.visits = np.asarray(visits, dtype=np.float64)
        node.value_sum = np.asarray(value_sum, dtype=np.float64)
        node.q = node.value_sum / (node.visits + 1.0)
        node.children = [None] * len(prior)
        return node


class TerminalLeaf:
    __slots__ = ("state",)

    def __init__(self, state: GameState):
        self.state = state


@dataclass
class SearchResult:
    actions: Tuple[Action, ...]
    visits: np.ndarray
    policy: np.ndarray
    inserted: List[GameState]
    root: Node = field(repr=False)

    @property
    def states_inserted(self) -> int:
        return len(self.inserted)

    def best_action(self) -> Action:
        return self.actions[int(np.argmax(self.visits))]


def mask_priors(probs: np.ndarray, actions: Sequence[Action]) -> np.ndarray:
    """Head probabilities restricted to ``actions`` and renormalised.

    Falls back to uniform when the legal mass is below ``PRIOR_FLOOR``.
    """
    size = len(probs)
    out = np.array([probs[a.head_index] if a.head_index < size else 0.0 for a in actions],
                   dtype=np.float64)
    total = out.sum()
    if not np.isfinite(total) or total < PRIOR_FLOOR:
        return np.full(len(actions), 1.0 / len(actions))
    return out / total


def evaluate_leaf(s: GameState, evaluator) -> Tuple[Optional[np.ndarray], float, Player]:
    """Returns ``(priors, value, reference player)``; ``value`` is from the reference player's view.

    Terminal states report +1 for their winner and no priors.
    """
    if s.phase is Phase.TERMINAL:
        return None, 1.0, s.winner
    probs, value = evaluator.evaluate(s)
    priors = mask_priors(np.asarray(probs, dtype=np.float64), game.legal_actions(s))
    return priors, float(np.clip(value, -1.0, 1.0)), game.mover(s)


def select_action(node: Node, c_puct: float = 1.0, theoretical: bool = False) -> int:
    return int(kernels.puct_select(node.q, node.prior, node.visits, c_puct, theoretical))


def backup(path: Sequence[Tuple[Node, int]], v_leaf: float, leaf_mover: Player) -> None:
    for node, idx in path:
        v = v_leaf if node.mover == leaf_mover else -v_leaf
        n = node.visits[idx]
        node.q[idx] = (node.q[idx] * n + v) / (n + 1.0)
        node.value_sum[idx] += v
        node.visits[idx] = n + 1.0


def policy_from_visits(visits: np.ndarray, temperature: float) -> np.ndarray:
    visits = np.asarray(visits, dtype=np.float64)
    if temperature == 0:
        pi = np.zeros_like(visits)
        pi[int(np.argmax(visits))] = 1.0
        return pi
    if visits.sum() == 0:
        return np.full(len(visits), 1.0 / len(visits))
    scaled = visits / visits.max()
    scaled = scaled ** (1.0 / temperature)
    return scaled / scaled.sum()


def search(root: GameState, evaluator, cfg: SearchConfig,
           rng: Optional[np.random.Generator] = None) -> SearchResult:
    if root.phase is Phase.TERMINAL:
        raise ValueError(f"cannot search from terminal state {root}")
    tree: Dict[GameState, object] = {}
    inserted: List[GameState] = []

    priors, _, _ = evaluate_leaf(root, evaluator)
    if cfg.dirichlet_alpha > 0:
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        noise = rng.dirichlet(np.full(len(priors), cfg.dirichlet_alpha))
        priors = (1 - cfg.dirichlet_weight) * priors + cfg.dirichlet_weight * noise
    root_node = Node(root, game.legal_actions(root), priors)
    tree[root] = root_node
    inserted.append(root)

    c = cfg.c_puct
    theoretical = cfg.theoretical_exploration
    puct = kernels.puct_select
    for _ in range(cfg.simulations):
        node = root_node
        path = []
        while True:
            idx = int(puct(node.q, node.prior, node.visits, c, theoretical))
            path.append((node, idx))
            child = node.children[idx]
            if child is None:
                child_state = game.apply(node.state, node.actions[idx])
                child = tree.get(child_state)
                if child is None:
                    priors, value, ref = evaluate_leaf(child_state, evaluator)
                    if priors is None:
                        child = TerminalLeaf(child_state)
                    else:
                        child = Node(child_state, game.legal_actions(child_state), priors)
                    tree[child_state] = child
                    inserted.append(child_state)
                    node.children[idx] = child
                    break
                node.children[idx] = child
            if type(child) is TerminalLeaf:
                value, ref = 1.0, child.state.winner
                break
            node = child
        backup(path, value, ref)

    visits = root_node.visits.copy()
    return SearchResult(tuple(root_node.actions), visits,
                        policy_from_visits(visits, cfg.temperature), inserted, root_node)
