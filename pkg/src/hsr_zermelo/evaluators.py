"""Evaluators map a non-terminal state to (head probabilities, value for the mover).

The probability vector is indexed by ``Action.head_index`` of the head that
serves the mover's role: the P head (Propose / Test, indexed by the integer
argument) or the OP head (Accept/Reject, Break/NotBreak at slots 0 and 1).
"""
from __future__ import annotations

from typing import Dict, Optional, Protocol, Tuple

import numpy as np

from . import game, oracle
from .game import GameState, Role
from .network import NetConfig, PolicyValueNet


class Evaluator(Protocol):
    def evaluate(self, s: GameState) -> Tuple[np.ndarray, float]: ...


def mover_role(s: GameState) -> Role:
    return game.role_of(s, game.mover(s))


class UniformEvaluator:
    """Flat priors, zero value: plain PUCT without any learned guidance."""

    def evaluate(self, s):
        size = s.n_max + 1 if mover_role(s) is Role.P else 2
        return np.full(size, 1.0 / size), 0.0


class OracleEvaluator:
    """One-hot prior on the oracle's move and the exact game value."""

    def evaluate(self, s):
        a = oracle.optimal_action(s)
        size = max(s.n_max + 1, a.head_index + 1) if mover_role(s) is Role.P else 2
        probs = np.zeros(size)
        probs[a.head_index] = 1.0
        value = 1.0 if oracle.correct_actions(s) else -1.0
        return probs, value


def normalise(features, k0: int, q0: int, n_max: int) -> np.ndarray:
    k, q, n, m, r = features[:5]
    scale = n_max + 1.0
    return np.array([k / k0, q / q0, n / scale, m / scale, r], dtype=np.float64)


class NetEvaluator:
    """Routes proposal-phase states to one network and refutation states to the other.

    Weights must not change while an instance is in use: outputs are cached
    per state. Build a fresh instance after each training step.
    """

    def __init__(self, refutation_net: PolicyValueNet, k0: int, q0: int, n_max: int,
                 proposal_net: Optional[PolicyValueNet] = None):
        self.refutation_net = refutation_net
        self.proposal_net = proposal_net
        self.k0, self.q0, self.n_max = k0, q0, n_max
        self._cache: Dict[GameState, Tuple[np.ndarray, float]] = {}
        self.calls = 0

    def features(self, s: GameState) -> np.ndarray:
        return normalise(game.encode(s), self.k0, self.q0, self.n_max)

    def net_for(self, s: GameState) -> PolicyValueNet:
        if game.is_proposal_phase(s):
            if self.proposal_net is None:
                raise ValueError("proposal-phase state but no proposal network configured")
            return self.proposal_net
        return self.refutation_net

    def evaluate(self, s):
        hit = self._cache.get(s)
        if hit is not None:
            return hit
        self.calls += 1
        pv = self.net_for(s).predict(self.features(s))
        probs = pv.policy_p if mover_role(s) is Role.P else pv.policy_op
        out = (probs, pv.value)
        self._cache[s] = out
        return out


def make_nets(p_size: int, seed: int, complete: bool, **overrides) -> Tuple[PolicyValueNet, Optional[PolicyValueNet]]:
    """Fresh (refutation, proposal) networks; proposal is None for refutation-only runs."""
    ref = PolicyValueNet(NetConfig(p_size=p_size, seed=seed, **overrides))
    prop = PolicyValueNet(NetConfig(p_size=p_size, seed=seed + 1, **overrides)) if complete else None
    return ref, prop
