"""Exact ground truth for the HSR game.

``N(k, q)`` is the largest candidate count that ``k`` jars and ``q`` tests can
always resolve. It obeys ``N(k, q) = N(k-1, q-1) + N(k, q-1)`` with ones on
both boundaries, i.e. partial row sums of Pascal's triangle.

Everything here except :func:`minimax_value` and :func:`reachable_states` is
derived from that table. Those two walk the game tree through ``game.apply``
and never look at the table, so they serve as an independent check on it.
"""
from __future__ import annotations

from enum import Enum
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, Optional, Set, Tuple

from . import game
from .game import (ACCEPT, BREAK, NOT_BREAK, REJECT, Action, GameState,
                   MoveRecord, Phase, Player)


class BudgetExceededError(RuntimeError):
    pass


class Judgment(str, Enum):
    CORRECT = "Correct"
    INCORRECT = "Incorrect"
    NO_CORRECT_EXISTS = "NoCorrectExists"


class Triangle:
    """Memo table of ``N(k, q)`` for ``0 <= k <= k_max``, ``0 <= q <= q_max``."""

    def __init__(self, k_max: int, q_max: int):
        if k_max < 0 or q_max < 0:
            raise ValueError("triangle bounds must be non-negative")
        self.k_max = k_max
        self.q_max = q_max
        rows = [[1] * (k_max + 1)]
        for q in range(1, q_max + 1):
            prev = rows[-1]
            rows.append([1] + [prev[k - 1] + prev[k] for k in range(1, k_max + 1)])
        self._rows = tuple(tuple(r) for r in rows)

    def __call__(self, k: int, q: int) -> int:
        return self._rows[q][k]

    def row(self, q: int) -> Tuple[int, ...]:
        return self._rows[q]

    def format(self) -> str:
        """Rows are test counts ``q``, columns jar counts ``k``."""
        width = max(len(str(self(self.k_max, self.q_max))), 3) + 1
        head = "q\\k".rjust(4) + "".join(str(k).rjust(width) for k in range(self.k_max + 1))
        lines = [head]
        for q in range(self.q_max + 1):
            lines.append(str(q).rjust(4) + "".join(str(v).rjust(width) for v in self._rows[q]))
        return "\n".join(lines)


@lru_cache(maxsize=None)
def bernoulli(k: int, q: int) -> int:
    if k < 0 or q < 0:
        raise ValueError(f"k and q must be non-negative, got ({k}, {q})")
    if k == 0 or q == 0:
        return 1
    # iterate over q so deep q never hits the recursion limit
    row = [1] * (k + 1)
    for _ in range(q):
        row = [1] + [row[j - 1] + row[j] for j in range(1, k + 1)]
    return row[k]


def claimer_wins(k: int, q: int, n: int) -> bool:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return n <= bernoulli(k, q)


def correct_tests(k: int, q: int, n: int) -> range:
    """Split points that keep the claimer in a winning position."""
    if n < 2 or k < 1 or q < 1:
        raise ValueError(f"no test is possible at (k={k}, q={q}, n={n})")
    if n > bernoulli(k, q):
        return range(0)
    lo = max(1, n - bernoulli(k, q - 1))
    hi = min(n - 1, bernoulli(k - 1, q - 1))
    return range(lo, hi + 1)


def correct_answers(k: int, q: int, n: int, m: int) -> FrozenSet[Action]:
    """Answers that leave the claimer in a losing position."""
    if not (1 <= m <= n - 1) or k < 1 or q < 1:
        raise ValueError(f"invalid pending test (k={k}, q={q}, n={n}, m={m})")
    out = set()
    if m > bernoulli(k - 1, q - 1):
        out.add(BREAK)
    if n - m > bernoulli(k, q - 1):
        out.add(NOT_BREAK)
    return frozenset(out)


def correct_decision(k0: int, q0: int, n: int) -> FrozenSet[Action]:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    best = bernoulli(k0, q0)
    if n > best:
        return frozenset({ACCEPT})
    if n < best:
        return frozenset({REJECT})
    return frozenset()


def optimal_proposal(k0: int, q0: int, n_max: Optional[int] = None) -> int:
    best = bernoulli(k0, q0)
    if n_max is not None and best > n_max:
        raise ValueError(f"N({k0},{q0})={best} exceeds the proposal bound n_max={n_max}")
    return best


def correct_actions(s: GameState) -> FrozenSet[Action]:
    """Actions that keep the mover of ``s`` in a winning position."""
    phase = s.phase
    if phase is Phase.CLAIMER_TEST:
        return frozenset(game.test(m) for m in correct_tests(s.k, s.q, s.n))
    if phase is Phase.REFUTER_ANSWER:
        return correct_answers(s.k, s.q, s.n, s.m)
    if phase is Phase.DECISION:
        return correct_decision(s.k, s.q, s.n)
    if phase is Phase.PROPOSAL:
        best = bernoulli(s.k, s.q)
        return frozenset({game.propose(best)}) if best <= s.n_max else frozenset()
    raise ValueError(f"terminal state {s} has no actions")


def classify_move(rec: MoveRecord) -> Judgment:
    good = correct_actions(rec.state_before)
    if not good:
        return Judgment.NO_CORRECT_EXISTS
    return Judgment.CORRECT if rec.action in good else Judgment.INCORRECT


def optimal_action(s: GameState) -> Action:
    """Deterministic reference move: the lowest-ordered correct action, else the first legal one."""
    legal = game.legal_actions(s)
    good = correct_actions(s)
    for a in legal:
        if a in good:
            return a
    return legal[0]


def _memo_key(s: GameState) -> tuple:
    # refutation values do not depend on who the claimer is
    if s.phase is Phase.TERMINAL:
        return (int(s.phase), s.k, s.q, s.n, s.m, s.winner == s.claimer)
    return (int(s.phase), s.k, s.q, s.n, s.m)


class Minimax:
    """Exhaustive solver over ``game.legal_actions`` / ``game.apply``.

    Memo entries store whether the claimer of a state wins; one instance may
    be reused across many queries.
    """

    def __init__(self, budget: int = 5_000_000):
        self.budget = budget
        self.expanded = 0
        self._memo: Dict[tuple, bool] = {}

    def claimer_wins(self, s: GameState) -> bool:
        if s.phase is Phase.TERMINAL:
            return s.winner == s.claimer
        key = _memo_key(s)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        self.expanded += 1
        if self.expanded > self.budget:
            raise BudgetExceededError(f"minimax node budget {self.budget} exceeded")
        who = game.mover(s)
        want = who == s.claimer
        result = not want
        for a in game.legal_actions(s):
            child = game.apply(s, a)
            # crossing a reject changes who the claimer is
            child_claimer_wins = self.claimer_wins(child)
            mover_wins = child_claimer_wins == (child.claimer == who)
            if mover_wins:
                result = want
                break
        self._memo[key] = result
        return result

    def winner(self, s: GameState) -> Player:
        if s.phase is Phase.TERMINAL:
            return s.winner
        return s.claimer if self.claimer_wins(s) else s.claimer.opponent


def minimax_value(s: GameState, budget: int = 5_000_000) -> Player:
    return Minimax(budget).winner(s)


def reachable_states(root: GameState, budget: int = 5_000_000) -> Set[GameState]:
    seen = {root}
    stack = [root]
    while stack:
        s = stack.pop()
        if s.phase is Phase.TERMINAL:
            continue
        for a in game.legal_actions(s):
            c = game.apply(s, a)
            if c not in seen:
                seen.add(c)
                if len(seen) > budget:
                    raise BudgetExceededError(f"state enumeration budget {budget} exceeded")
                stack.append(c)
    return seen


def enumerate_states(k: int, q: int, n: int, budget: int = 5_000_000) -> Tuple[int, Set[GameState]]:
    """All distinct states reachable from the refutation root ``(k, q, n)``.

    ClaimerTest, RefuterAnswer and Terminal states are all counted.
    """
    states = reachable_states(game.refutation_state(k, q, n, Player.FIRST), budget)
    return len(states), states


def state_counts(states: Iterable[GameState]) -> Dict[str, int]:
    """Counts of a state set under a few identity conventions."""
    by_phase = {p: 0 for p in Phase}
    for s in states:
        by_phase[s.phase] += 1
    return {
        "all": sum(by_phase.values()),
        "test_and_terminal": by_phase[Phase.CLAIMER_TEST] + by_phase[Phase.TERMINAL],
        "claimer_test": by_phase[Phase.CLAIMER_TEST],
        "refuter_answer": by_phase[Phase.REFUTER_ANSWER],
        "terminal": by_phase[Phase.TERMINAL],
    }


class OracleAgent:
    """Plays :func:`optimal_action` everywhere."""

    name = "oracle"

    def select(self, s: GameState) -> Action:
        return optimal_action(s)
