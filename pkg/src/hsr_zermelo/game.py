"""Zermelo game for the Highest-Safe-Rung problem.

A complete game starts with a proposal phase (First proposes ``n``, Second
accepts or rejects) and continues with a refutation phase in which the
claimer picks split points and the refuter answers break / not-break.

``n`` always counts candidate positions for the highest safe rung. A test at
``m`` splits the candidates into ``m`` (jar breaks) and ``n - m`` (jar
survives); the claimer wins once a single candidate is left.
"""
from __future__ import annotations

from enum import Enum, IntEnum
from functools import lru_cache
from typing import NamedTuple, Optional, Protocol, Sequence


class IllegalActionError(ValueError):
    pass


class Player(IntEnum):
    FIRST = 0
    SECOND = 1

    @property
    def opponent(self) -> "Player":
        return Player(1 - self)


class Phase(IntEnum):
    PROPOSAL = 0
    DECISION = 1
    CLAIMER_TEST = 2
    REFUTER_ANSWER = 3
    TERMINAL = 4


class Role(str, Enum):
    P = "P"
    OP = "OP"


class Kind(IntEnum):
    PROPOSE = 0
    ACCEPT = 1
    REJECT = 2
    TEST = 3
    BREAK = 4
    NOT_BREAK = 5


class Action(NamedTuple):
    kind: Kind
    value: int = 0

    @property
    def head_index(self) -> int:
        """Position of this action inside its policy head.

        Propose/Test index the P head by their integer argument; the binary
        OP actions index slots 0 and 1 of the OP head.
        """
        if self.kind in (Kind.PROPOSE, Kind.TEST):
            return self.value
        return 0 if self.kind in (Kind.ACCEPT, Kind.BREAK) else 1

    def __str__(self) -> str:
        if self.kind is Kind.PROPOSE:
            return f"Propose({self.value})"
        if self.kind is Kind.TEST:
            return f"Test({self.value})"
        return {Kind.ACCEPT: "Accept", Kind.REJECT: "Reject",
                Kind.BREAK: "Break", Kind.NOT_BREAK: "NotBreak"}[self.kind]


ACCEPT = Action(Kind.ACCEPT)
REJECT = Action(Kind.REJECT)
BREAK = Action(Kind.BREAK)
NOT_BREAK = Action(Kind.NOT_BREAK)


def propose(n: int) -> Action:
    return Action(Kind.PROPOSE, n)


def test(m: int) -> Action:
    return Action(Kind.TEST, m)


test.__test__ = False  # keep pytest from collecting this helper


class GameState(NamedTuple):
    """Immutable game position.

    In the proposal phase ``n`` is 0 (nothing proposed yet); from the decision
    phase on it is the proposed value or the refutation candidate count. ``m``
    is 0 except while a test is pending. ``winner`` is set only on terminals.
    """

    phase: Phase
    k: int
    q: int
    n: int
    m: int
    claimer: Player
    n_max: int
    winner: Optional[Player] = None

    @property
    def is_terminal(self) -> bool:
        return self.phase is Phase.TERMINAL

    @property
    def key(self) -> tuple:
        return (int(self.phase), self.k, self.q, self.n, self.m,
                int(self.claimer), -1 if self.winner is None else int(self.winner))

    def __str__(self) -> str:
        tail = f" winner={self.winner.name}" if self.winner is not None else ""
        return (f"({self.phase.name} {self.k} {self.q} {self.n} {self.m} "
                f"{self.claimer.name}{tail})")


class MoveRecord(NamedTuple):
    state_before: GameState
    actor: Player
    actor_role: Role
    action: Action


class Game(Protocol):
    """What the search engine needs from a game."""

    def legal_actions(self, s: GameState) -> Sequence[Action]: ...

    def apply(self, s: GameState, a: Action) -> GameState: ...

    def mover(self, s: GameState) -> Player: ...


def initial_state(k0: int, q0: int, n_max: int) -> GameState:
    if k0 < 1 or q0 < 1:
        raise ValueError(f"k0 and q0 must be >= 1, got k0={k0}, q0={q0}")
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    return GameState(Phase.PROPOSAL, k0, q0, 0, 0, Player.FIRST, n_max)


def refutation_state(k: int, q: int, n: int, claimer: Player,
                     n_max: Optional[int] = None) -> GameState:
    """Refutation position, collapsed to a terminal when already decided."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if k < 0 or q < 0:
        raise ValueError(f"k and q must be non-negative, got k={k}, q={q}")
    if n_max is None:
        n_max = n
    if n == 1:
        return GameState(Phase.TERMINAL, k, q, n, 0, claimer, n_max, claimer)
    if k == 0 or q == 0:
        return GameState(Phase.TERMINAL, k, q, n, 0, claimer, n_max, claimer.opponent)
    return GameState(Phase.CLAIMER_TEST, k, q, n, 0, claimer, n_max)


@lru_cache(maxsize=None)
def _tests(n: int) -> tuple:
    return tuple(Action(Kind.TEST, m) for m in range(1, n))


@lru_cache(maxsize=None)
def _proposals(n_max: int) -> tuple:
    return tuple(Action(Kind.PROPOSE, n) for n in range(1, n_max + 1))


_DECISIONS = (ACCEPT, REJECT)
_ANSWERS = (BREAK, NOT_BREAK)


def legal_actions(s: GameState) -> tuple:
    phase = s.phase
    if phase is Phase.CLAIMER_TEST:
        return _tests(s.n)
    if phase is Phase.REFUTER_ANSWER:
        return _ANSWERS
    if phase is Phase.DECISION:
        return _DECISIONS
    if phase is Phase.PROPOSAL:
        return _proposals(s.n_max)
    raise IllegalActionError(f"terminal state {s} has no legal actions")


def mover(s: GameState) -> Player:
    phase = s.phase
    if phase is Phase.CLAIMER_TEST:
        return s.claimer
    if phase is Phase.REFUTER_ANSWER:
        return s.claimer.opponent
    if phase is Phase.PROPOSAL:
        return Player.FIRST
    if phase is Phase.DECISION:
        return Player.SECOND
    raise IllegalActionError(f"terminal state {s} has no mover")


def role_of(s: GameState, player: Player) -> Role:
    """P is whoever currently asserts the claim (the proposer before a reject)."""
    return Role.P if player == s.claimer else Role.OP


def apply(s: GameState, a: Action) -> GameState:
    phase = s.phase
    kind = a.kind
    if phase is Phase.CLAIMER_TEST:
        if kind is not Kind.TEST:
            raise IllegalActionError(f"{a} not allowed in {phase.name}; expected Test(m)")
        if not 1 <= a.value <= s.n - 1:
            raise IllegalActionError(f"Test({a.value}) outside [1, {s.n - 1}] at {s}")
        return s._replace(phase=Phase.REFUTER_ANSWER, m=a.value)
    if phase is Phase.REFUTER_ANSWER:
        if kind is Kind.BREAK:
            return refutation_state(s.k - 1, s.q - 1, s.m, s.claimer, s.n_max)
        if kind is Kind.NOT_BREAK:
            return refutation_state(s.k, s.q - 1, s.n - s.m, s.claimer, s.n_max)
        raise IllegalActionError(f"{a} not allowed in {phase.name}; expected Break/NotBreak")
    if phase is Phase.PROPOSAL:
        if kind is not Kind.PROPOSE:
            raise IllegalActionError(f"{a} not allowed in {phase.name}; expected Propose(n)")
        if not 1 <= a.value <= s.n_max:
            raise IllegalActionError(f"Propose({a.value}) outside [1, {s.n_max}]")
        return s._replace(phase=Phase.DECISION, n=a.value)
    if phase is Phase.DECISION:
        if kind is Kind.ACCEPT:
            return refutation_state(s.k, s.q, s.n, s.claimer, s.n_max)
        if kind is Kind.REJECT:
            return refutation_state(s.k, s.q, s.n + 1, s.claimer.opponent, s.n_max)
        raise IllegalActionError(f"{a} not allowed in {phase.name}; expected Accept/Reject")
    raise IllegalActionError(f"cannot act in terminal state {s}")


def is_proposal_phase(s: GameState) -> bool:
    return s.phase is Phase.PROPOSAL or s.phase is Phase.DECISION


def encode(s: GameState) -> tuple:
    """Feature tuple ``(k, q, n, m, r, proposal_flag)``.

    ``r`` is +1 when the mover is the current claimer (the proposer during the
    proposal phase) and -1 otherwise. The last entry routes the state to the
    proposal-phase (1) or refutation-phase (0) evaluator.
    """
    who = mover(s)
    r = 1 if who == s.claimer else -1
    if is_proposal_phase(s):
        return (s.k, s.q, s.n, 0, r, 1)
    return (s.k, s.q, s.n, s.m, r, 0)


def parse_action(text: str) -> Action:
    """Inverse of ``str(action)``; also accepts bare integers and b/n shorthands."""
    t = text.strip()
    low = t.lower()
    named = {"accept": ACCEPT, "a": ACCEPT, "reject": REJECT, "r": REJECT,
             "break": BREAK, "b": BREAK, "notbreak": NOT_BREAK, "not_break": NOT_BREAK,
             "nb": NOT_BREAK, "n": NOT_BREAK}
    if low in named:
        return named[low]
    for prefix, kind in (("propose(", Kind.PROPOSE), ("test(", Kind.TEST)):
        if low.startswith(prefix) and low.endswith(")"):
            return Action(kind, int(low[len(prefix):-1]))
    raise ValueError(f"cannot parse action {text!r}")


class HSRGame:
    """Module functions bundled behind the :class:`Game` protocol."""

    legal_actions = staticmethod(legal_actions)
    apply = staticmethod(apply)
    mover = staticmethod(mover)
    encode = staticmethod(encode)
