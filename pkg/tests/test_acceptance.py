"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are echoed in the
terminal summary (see conftest.py). ``python3 tests/test_acceptance.py`` runs
the same checks without pytest.
"""
import time
from dataclasses import replace

import numpy as np

from hsr_zermelo import config, game, oracle
from hsr_zermelo.evaluators import OracleEvaluator
from hsr_zermelo.game import MoveRecord, Phase, Player
from hsr_zermelo.mcts import Node, SearchConfig, backup, policy_from_visits, search, select_action
from hsr_zermelo.network import NetConfig, PolicyValueNet, ROLE_OP, ROLE_P
from hsr_zermelo.oracle import Judgment
from hsr_zermelo.pipeline import GameConfig, Pipeline, run_episode

RESULTS = []
SEED = 1


def record(number, ok, detail, started):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail} ({time.perf_counter() - started:.1f}s)"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- 1

FIG_TRIANGLE = {  # rows q = 0..7, columns k = 0..7
    0: [1] * 8,
    1: [1, 2, 2, 2, 2, 2, 2, 2],
    2: [1, 3, 4, 4, 4, 4, 4, 4],
    3: [1, 4, 7, 8, 8, 8, 8, 8],
    4: [1, 5, 11, 15, 16, 16, 16, 16],
    5: [1, 6, 16, 26, 31, 32, 32, 32],
    6: [1, 7, 22, 42, 57, 63, 64, 64],
    7: [1, 8, 29, 64, 99, 120, 127, 128],
}


def test_criterion_1_oracle_table():
    t0 = time.perf_counter()
    oracle.bernoulli.cache_clear()
    tri = oracle.Triangle(7, 7)
    table_ok = all(list(tri.row(q)) == FIG_TRIANGLE[q] for q in range(8))
    spots = oracle.bernoulli(7, 7) == 128 and oracle.bernoulli(3, 7) == 64
    boundary = all(oracle.bernoulli(0, q) == 1 for q in range(30)) and \
        all(oracle.bernoulli(k, 0) == 1 for k in range(30))
    elapsed = time.perf_counter() - t0
    record(1, table_ok and spots and boundary and elapsed < 1.0,
           f"triangle={table_ok} N(7,7)={oracle.bernoulli(7, 7)} N(3,7)={oracle.bernoulli(3, 7)} "
           f"boundary={boundary}", t0)


# ---------------------------------------------------------------- 2

def test_criterion_2_oracle_equals_minimax():
    t0 = time.perf_counter()
    positions = moves = 0
    mismatches = []
    for k in range(1, 5):
        for q in range(1, 8):
            bound = oracle.bernoulli(k, q) + 4
            mm = oracle.Minimax(budget=10_000_000)
            # the complete game reaches every refutation game with n <= bound + 1
            for s in oracle.reachable_states(game.initial_state(k, q, bound)):
                if s.phase is Phase.TERMINAL:
                    continue
                positions += 1
                if s.phase is Phase.CLAIMER_TEST and \
                        oracle.claimer_wins(s.k, s.q, s.n) != mm.claimer_wins(s):
                    mismatches.append(("claimer_wins", s))
                who = game.mover(s)
                role = game.role_of(s, who)
                holds = mm.winner(s) == who
                for a in game.legal_actions(s):
                    moves += 1
                    if not holds:
                        want = Judgment.NO_CORRECT_EXISTS
                    elif mm.winner(game.apply(s, a)) == who:
                        want = Judgment.CORRECT
                    else:
                        want = Judgment.INCORRECT
                    if oracle.classify_move(MoveRecord(s, who, role, a)) is not want:
                        mismatches.append(("classify", s, a))
    record(2, not mismatches,
           f"{positions} positions, {moves} moves, {len(mismatches)} disagreements", t0)


# ---------------------------------------------------------------- 3

def test_criterion_3_binary_search_line():
    t0 = time.perf_counter()
    root = game.refutation_state(7, 7, 128, Player.FIRST)
    first = oracle.optimal_action(root)
    bad = []
    # at the boundary n = N(k,q) both answers lead to a boundary position again
    frontier = [(7, 7)]
    seen = set()
    while frontier:
        k, q = frontier.pop()
        if (k, q) in seen or k == 0 or q == 0:
            continue
        seen.add((k, q))
        n = oracle.bernoulli(k, q)
        if n == 1:
            continue
        tests = oracle.correct_tests(k, q, n)
        pivot = oracle.bernoulli(k - 1, q - 1)
        if list(tests) != [pivot]:
            bad.append((k, q, list(tests)))
        s = game.refutation_state(k, q, n, Player.FIRST)
        if oracle.optimal_action(s) != game.test(pivot):
            bad.append((k, q, "optimal"))
        frontier += [(k - 1, q - 1), (k, q - 1)]
    line = []
    s = root
    while s.phase is not Phase.TERMINAL:
        a = oracle.optimal_action(s)
        if a.kind is game.Kind.TEST:
            line.append(a.value)
        s = game.apply(s, a)
    ok = first == game.test(64) and not bad and line[:3] == [64, 32, 16] and \
        time.perf_counter() - t0 < 1.0
    record(3, ok, f"first={first} line={line} boundary positions={len(seen)} bad={len(bad)}", t0)


# ---------------------------------------------------------------- training helpers

def _pipeline(preset, **overrides):
    cfg = config.build(preset, overrides={"seed": SEED, **overrides}).validate(training=True)
    return cfg, Pipeline(cfg.game_config(), cfg.pipeline_config(), cfg.net_overrides())


# ---------------------------------------------------------------- 4

def test_criterion_4_refutation_convergence():
    t0 = time.perf_counter()
    cfg, pipe = _pipeline("hsr-2-6-22")
    assert (cfg.k, cfg.q, cfg.n) == (2, 6, oracle.bernoulli(2, 6)) and cfg.episodes == 100
    hit = None
    history = []
    for _ in range(cfg.iterations):
        r = pipe.run_iteration()
        win_rate = r.new_as_P_wins / r.new_as_P_games
        history.append((r.iteration, r.new_P_correct, win_rate))
        if r.new_P_correct >= 0.95 and win_rate >= 0.95:
            hit = r
            break
    detail = (f"(2,6,22) P correctness {hit.new_P_correct:.2f}, claimer wins "
              f"{hit.new_as_P_wins}/{hit.new_as_P_games} at iteration {hit.iteration}"
              if hit else f"not reached in {cfg.iterations} iterations; last {history[-1]}")
    record(4, hit is not None and time.perf_counter() - t0 < 3600, detail, t0)


# ---------------------------------------------------------------- 5

def test_criterion_5_unsolvable_instance():
    t0 = time.perf_counter()
    cfg, pipe = _pipeline("hsr-2-2-5", oracle_probe_rounds=20)
    assert not oracle.claimer_wins(2, 2, 5)
    bad = []
    for _ in range(cfg.iterations):
        r = pipe.run_iteration()
        if r.iteration == 0:
            continue
        p_scores = (r.new_P_correct, r.old_P_correct)
        op_vs_trained = (r.new_as_OP_wins == r.new_as_OP_games and
                         r.new_as_P_wins == 0)  # the old OP beat the new P every time
        op_vs_oracle = r.oracle_probe["new_as_OP_win_rate"]
        if p_scores != (0.0, 0.0) or not op_vs_trained or op_vs_oracle != 1.0:
            bad.append((r.iteration, p_scores, r.new_as_OP_wins, r.new_as_P_wins, op_vs_oracle))
    ok = not bad and time.perf_counter() - t0 < 600
    record(5, ok, f"(2,2,5) {cfg.iterations - 1} iterations after the first, "
                  f"P correctness 0.0 and OP wins all vs trained and oracle P; violations={bad}", t0)


# ---------------------------------------------------------------- 6

def test_criterion_6_proposal_learning():
    t0 = time.perf_counter()
    cfg, pipe = _pipeline("hsr-2-3-complete")
    target = oracle.bernoulli(2, 3)
    assert target == 7 and cfg.n_max == 10
    hit = None
    last = None
    for _ in range(cfg.iterations):
        r = pipe.run_iteration()
        share = r.proposals.get(str(target), 0) / r.new_as_P_games
        wrong = {n: a for n, a in r.decision_probe.items()
                 if int(n) != target and
                 game.parse_action(a) not in oracle.correct_decision(2, 3, int(n))}
        last = (r.iteration, share, wrong)
        if share >= 0.9 and not wrong:
            hit = r
            break
    detail = (f"(2,3,n_max=10) proposes {target} in {hit.proposals.get(str(target))}/"
              f"{hit.new_as_P_games} arena games, decisions correct for all n!={target} "
              f"at iteration {hit.iteration}"
              if hit else f"not reached; last (iteration, share, wrong decisions)={last}")
    record(6, hit is not None and time.perf_counter() - t0 < 3600, detail, t0)


# ---------------------------------------------------------------- 7

def test_criterion_7_mcts_arithmetic():
    t0 = time.perf_counter()
    checks = {}
    checks["select (0.75 vs 0.5)"] = select_action(Node.from_counts([1, 0], [1, 0], [0.5, 0.5])) == 0
    checks["cold-start tie"] = select_action(Node.from_counts([0, 0], [0, 0], [0.8, 0.2])) == 0
    node = Node.from_counts([1], [0], [1.0])
    node.q[:] = 0.5
    node.mover = Player.FIRST
    backup([(node, 0)], 1.0, Player.FIRST)
    checks["backup +1"] = node.q[0] == 0.75 and node.visits[0] == 2
    node.q[:] = 0.5
    node.visits[:] = 1
    backup([(node, 0)], -1.0, Player.FIRST)
    checks["backup -1"] = node.q[0] == -0.25 and node.visits[0] == 2
    node.q[:] = 0.0
    node.visits[:] = 0
    backup([(node, 0)], 1.0, Player.SECOND)
    checks["perspective"] = node.q[0] == -1.0
    checks["pi tau=1"] = np.array_equal(policy_from_visits([3, 1], 1.0), [0.75, 0.25])
    checks["pi tau=0"] = np.array_equal(policy_from_visits([3, 1], 0.0), [1.0, 0.0])

    rng = np.random.default_rng(2024)
    ev = OracleEvaluator()
    scfg = SearchConfig(simulations=50, temperature=0.0)
    correct = total = 0
    while total < 500:
        k, q = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        top = oracle.bernoulli(k, q)
        if top < 2:
            continue
        n = int(rng.integers(2, top + 5))
        s = game.refutation_state(k, q, n, Player.FIRST)
        if rng.random() < 0.5:
            s = game.apply(s, game.test(int(rng.integers(1, n))))
        if not oracle.correct_actions(s):
            continue  # not solvable for the mover
        total += 1
        a = search(s, ev, scfg).best_action()
        who = game.mover(s)
        correct += oracle.classify_move(MoveRecord(s, who, game.role_of(s, who), a)) is Judgment.CORRECT
    ok = all(checks.values()) and correct == total and time.perf_counter() - t0 < 60
    failed = [name for name, v in checks.items() if not v]
    record(7, ok, f"hand examples failed={failed}; oracle-guided argmax correct {correct}/{total}", t0)


# ---------------------------------------------------------------- 8

def test_criterion_8_coverage():
    t0 = time.perf_counter()
    small = oracle.enumerate_states(1, 1, 2)[0]
    gcfg = GameConfig("refutation", 2, 3, n=7)
    pcfg = config.build(overrides={"seed": SEED, "simulations": 20}).pipeline_config()
    mism = 0
    rng = np.random.default_rng(0)
    for _ in range(20):
        _, trace = run_episode(OracleEvaluator(), gcfg, pcfg, rng)
        # independent recount: replay each move's search from the recorded positions
        recount = set()
        for rec in trace.moves:
            r = search(rec.state_before, OracleEvaluator(), replace(pcfg.search, temperature=1.0))
            recount.update(r.inserted)
        walk = set()
        for chunk in trace.inserted:
            walk.update(chunk)
        mism += trace.accessed_states() != len(recount) or walk != recount
    count, states = oracle.enumerate_states(7, 7, 128)
    conventions = oracle.state_counts(states)
    matches = [name for name, v in conventions.items() if v == 4257]
    ok = small == 4 and mism == 0
    record(8, ok, f"enumerate(1,1,2)={small}; accessed-state recount mismatches={mism}/20; "
                  f"(7,7,128) counts {conventions} vs reference 4257 "
                  f"({'matches ' + matches[0] if matches else 'no convention matches; soft, not gated'})",
           t0)


# ---------------------------------------------------------------- 9

def test_criterion_9_network_numerics(tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    net = PolicyValueNet(NetConfig(p_size=5, conv_channels=(3, 3, 2, 2), dense_width=6,
                                   dtype="float64", seed=2))
    x = rng.uniform(-1, 1, (6, 5))
    role = np.array([ROLE_P, ROLE_OP] * 3)
    pi = np.zeros((6, 5))
    for i in range(6):
        width = 5 if role[i] == ROLE_P else 2
        pi[i, :width] = rng.dirichlet(np.ones(width))
    z = rng.choice([-1.0, 1.0], 6)
    _, grads, _ = net.loss_and_grads(x, role, pi, z)
    worst = 0.0
    eps = 1e-6
    for name, param in net.params.items():
        flat = param.reshape(-1)
        numeric = np.zeros(flat.size)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = net.loss_and_grads(x, role, pi, z)[0]
            flat[i] = old - eps
            down = net.loss_and_grads(x, role, pi, z)[0]
            flat[i] = old
            numeric[i] = (up - down) / (2 * eps)
        g = grads[name].reshape(-1)
        worst = max(worst, np.abs(numeric - g).max() / max(np.abs(numeric).max(), np.abs(g).max(), 1e-8))

    real = PolicyValueNet(NetConfig(p_size=23, seed=3))
    xs = rng.uniform(-1, 1, (16, 5))
    rs = np.array([ROLE_P, ROLE_OP] * 8)
    ps = np.zeros((16, 23))
    ps[rs == ROLE_P, 4] = 1.0
    ps[rs == ROLE_OP, 1] = 1.0
    real.fit(xs, rs, ps, np.ones(16), epochs=2, batch_size=8)
    real.save(tmp_path / "c.ckpt")
    back = PolicyValueNet.load(tmp_path / "c.ckpt")
    a, b = real.predict_batch(xs), back.predict_batch(xs)
    exact = all(np.array_equal(u, v) for u, v in zip(a, b)) and \
        all(np.array_equal(real.params[k], back.params[k]) for k in real.params)

    single = PolicyValueNet(NetConfig(p_size=8, seed=2))
    x1 = np.array([[0.5, 0.8, 0.4, 0.0, 1.0]])
    p1 = np.zeros((1, 8))
    p1[0, 3] = 1.0
    loss = None
    for _ in range(1500):
        loss = single.train_batch(x1, np.array([ROLE_P]), p1, np.array([1.0]))["loss"]
    ok = worst < 1e-3 and exact and loss < 1e-3 and time.perf_counter() - t0 < 120
    record(9, ok, f"max relative gradient error {worst:.2e}; checkpoint bit-exact={exact}; "
                  f"overfit loss {loss:.2e}", t0)


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
