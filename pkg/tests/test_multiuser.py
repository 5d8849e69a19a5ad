import itertools

import numpy as np
import pytest

from mmpass.config import ScenarioConfig, build_scenario
from mmpass.multiuser import (AssignmentMatrix, _SlotSolver, fp_precoding,
                              group_users, grouping_cost, hungarian_assign,
                              optimize_scenario, pairwise_rate_table,
                              parse_scheme)

SIGMA = 10.0 ** -2.6


# ---------------------------------------------------------------------------
# grouping

def test_grouping_adjacent_pairs_on_one_guide():
    users = np.array([[1, 3, 0], [2, 3, 0], [8, 3, 0], [9, 3, 0]], float)
    g = group_users(users, [3.0])
    assert sorted(tuple(sorted(p)) for p in g.groups) == [(0, 1), (2, 3)]


def test_grouping_respects_nearest_waveguide():
    users = np.array([[5, 1.2, 0], [5, 4.8, 0], [6, 1.4, 0], [6, 4.6, 0]],
                     float)
    g = group_users(users, [1.5, 4.5])
    assert sorted(tuple(sorted(p)) for p in g.groups) == [(0, 2), (1, 3)]


def test_grouping_odd_count_leaves_singleton():
    users = np.array([[1, 3, 0], [2, 3, 0], [8, 3, 0]], float)
    g = group_users(users, [3.0])
    sizes = sorted(len(p) for p in g.groups)
    assert sizes == [1, 2]
    assert set(k for p in g.groups for k in p) == {0, 1, 2}


def test_grouping_singletons_mode():
    users = np.array([[4, 1, 0], [2, 1, 0], [3, 5, 0]], float)
    g = group_users(users, [1.5, 4.5], q=1)
    assert all(len(p) == 1 for p in g.groups)
    # waveguide-major, sorted along x within each guide
    assert [p[0] for p in g.groups] == [1, 0, 2]


def _exhaustive_pairing_cost(users):
    k = len(users)
    ids = list(range(k))
    best = np.inf
    for pairing in _pairings(ids):
        best = min(best, grouping_cost(users, pairing))
    return best


def _pairings(ids):
    if not ids:
        yield []
        return
    first, rest = ids[0], ids[1:]
    for i, partner in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for tail in _pairings(remaining):
            yield [(first, partner)] + tail


def test_grouping_near_optimal_cost():
    # heuristic grouping within 1.25x of the exhaustive optimum
    ys = [1.5, 4.5]
    for seed in range(100):
        rng = np.random.default_rng(seed)
        users = np.column_stack([rng.uniform(0, 10, 6), rng.uniform(0, 6, 6),
                                 np.zeros(6)])
        g = group_users(users, ys)
        best = _exhaustive_pairing_cost(users)
        assert g.cost <= 1.25 * best + 1e-9, f"seed {seed}"


def test_grouping_partitions_everyone():
    rng = np.random.default_rng(5)
    users = np.column_stack([rng.uniform(0, 10, 11), rng.uniform(0, 6, 11),
                             np.zeros(11)])
    g = group_users(users, [1.0, 3.0, 5.0])
    flat = sorted(k for p in g.groups for k in p)
    assert flat == list(range(11))


# ---------------------------------------------------------------------------
# Hungarian assignment

def test_hungarian_two_by_two():
    a = hungarian_assign(np.array([[5.0, 1.0], [2.0, 3.0]]))
    assert np.array_equal(a.x, np.eye(2, dtype=np.int8))


def test_hungarian_rectangular_padding():
    table = np.array([[5.0, 1.0], [2.0, 3.0], [4.0, 4.0]])
    a = hungarian_assign(table)
    assert a.x.shape == (3, 2)
    assert a.x.sum() == 2  # one element stays unmatched
    assert np.all(a.x.sum(axis=0) == 1)


def test_hungarian_matches_brute_force():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        size = int(rng.integers(2, 7))
        table = rng.uniform(0, 10, size=(size, size))
        a = hungarian_assign(table)
        total = float((table * a.x).sum())
        best = max(sum(table[i, p[i]] for i in range(size))
                   for p in itertools.permutations(range(size)))
        assert abs(total - best) < 1e-9, f"seed {seed}"


def test_assignment_matrix_validation():
    with pytest.raises(ValueError):
        AssignmentMatrix(np.array([[0, 2]]))


# ---------------------------------------------------------------------------
# rate table and greedy fill

def _pair_scenario(users, m=1, n=1):
    cfg = ScenarioConfig(num_waveguides=m, pas_per_waveguide=n,
                         num_users=len(users))
    return build_scenario(cfg, users=np.asarray(users, float))


def test_rate_table_single_entry_matches_pair_solver():
    scn = _pair_scenario([[4.0, 3.0, 0.0], [6.5, 3.0, 0.0]])
    g = group_users(scn.users, [3.0])
    table = pairwise_rate_table(scn, g)
    assert table.shape == (1, 1)
    solver = _SlotSolver(scn, g.groups)
    cand = solver.candidate(0, 0)
    assert table[0, 0] == pytest.approx(solver._rate_of(cand, (0.0, 0.0)))
    from mmpass.placement import LinkModel, two_user_shared_position
    link = LinkModel(scn)
    sol = two_user_shared_position(scn.users[0], scn.users[1], link,
                                   scn.power, (SIGMA, SIGMA))
    # table entry picks the better of the two mode orderings
    assert table[0, 0] >= sol.sum_rate - 1e-9


def test_rate_table_interference_lowers_entries():
    scn = _pair_scenario([[2.0, 2.0, 0.0], [3.5, 2.0, 0.0],
                          [6.5, 4.0, 0.0], [8.0, 4.0, 0.0]],
                         m=2, n=1)
    g = group_users(scn.users, [wg.axis_y for wg in scn.waveguides])
    empty = pairwise_rate_table(scn, g)
    x = np.zeros((2, 2), dtype=np.int8)
    x[1, 1] = 1  # second element actively serving the far pair
    loaded = pairwise_rate_table(scn, g, AssignmentMatrix(x))
    assert loaded[0, 0] < empty[0, 0]
    # the untouched column is evaluated without self-interference
    assert loaded[1, 1] == pytest.approx(empty[1, 1])


def test_greedy_fill_assigns_all_elements():
    scn = _pair_scenario([[2.0, 2.0, 0.0], [3.0, 2.0, 0.0]], m=2, n=2)
    g = group_users(scn.users, [wg.axis_y for wg in scn.waveguides])
    solver = _SlotSolver(scn, g.groups)
    a0 = hungarian_assign(solver.rate_table())
    filled = solver.greedy_fill(a0)
    assert np.all(filled.x.sum(axis=1) == 1)
    assert np.all(filled.x.sum(axis=0) >= 1)


def test_greedy_fill_prefers_larger_exact_gain():
    # one spare element, two pair candidates: the filled choice must
    # realize the larger recomputed objective increment
    scn = _pair_scenario([[1.5, 2.8, 0.0], [2.5, 2.8, 0.0],
                          [7.0, 3.2, 0.0], [8.5, 3.2, 0.0]],
                         m=1, n=3)
    g = group_users(scn.users, [3.0])
    solver = _SlotSolver(scn, g.groups)
    a0 = hungarian_assign(solver.rate_table())
    filled = solver.greedy_fill(a0)
    spare = [i for i in range(3) if a0.x[i].sum() == 0]
    assert len(spare) == 1
    chosen = filled.group_of(spare[0])
    base = solver.objective(a0)
    gains = []
    for j in range(2):
        trial = a0.x.copy()
        trial[spare[0], j] = 1
        gains.append(solver.objective(AssignmentMatrix(trial)) - base)
    assert chosen == int(np.argmax(gains))


# ---------------------------------------------------------------------------
# fractional programming

def _random_fp_instance(rng, k=None, qm=None, ports=None):
    k = k or int(rng.integers(2, 6))
    qm = qm or int(rng.integers(2, 7))
    ports = ports or int(rng.integers(k, 2 * k + 1))
    h = rng.normal(size=(k, qm)) + 1j * rng.normal(size=(k, qm))
    w_p = np.zeros((ports, k))
    for i in range(ports):
        w_p[i, int(rng.integers(0, k))] = rng.uniform(0.3, 1.0)
    return h, w_p


def test_fp_monotone_tight_and_feasible():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        h, w_p = _random_fp_instance(rng)
        fact, trace, gaps = fp_precoding(h, w_p, 10.0, 1e-2,
                                         max_iter=60, track_tightness=True)
        assert np.all(np.diff(trace) >= -1e-9), f"seed {seed}"
        assert max(gaps) < 1e-9, f"seed {seed}"
        assert fact.power_trace <= 1.0 + 1e-9
        if fact.chi > 0:  # constraint active
            assert fact.power_trace >= 1.0 - 1e-6
        w = fact.g @ fact.w_p
        assert np.trace(w @ w.conj().T).real <= 1.0 + 1e-9


def test_fp_single_user_matched_filter():
    rng = np.random.default_rng(33)
    h = rng.normal(size=(1, 5)) + 1j * rng.normal(size=(1, 5))
    w_p = np.zeros((2, 1))
    w_p[0, 0] = 1.0
    fact, trace = fp_precoding(h, w_p, 10.0, 1e-2)
    expected = 0.5 * np.log2(1 + 10.0 * np.linalg.norm(h) ** 2 / 1e-2)
    assert trace[-1] == pytest.approx(expected, abs=1e-6)


def test_fp_rejects_bad_noise():
    with pytest.raises(ValueError):
        fp_precoding(np.ones((1, 1), dtype=complex), np.ones((1, 1)), 1.0,
                     0.0)


# ---------------------------------------------------------------------------
# scheme pipeline

@pytest.fixture(scope="module")
def nominal_results():
    cfg = ScenarioConfig(num_waveguides=2, pas_per_waveguide=2,
                         num_users=8, seed=9)
    scn = build_scenario(cfg)
    out = {}
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for scheme in ("pa-mm", "pi-mm", "dp-mm", "pa-sm", "pi-sm"):
            out[scheme] = optimize_scenario(scn, scheme)
    return out


def test_scheme_polarization_ordering(nominal_results):
    assert (nominal_results["pa-mm"].report.sum_rate
            >= nominal_results["pi-mm"].report.sum_rate - 1e-9)
    assert (nominal_results["pa-sm"].report.sum_rate
            >= nominal_results["pi-sm"].report.sum_rate - 1e-9)


def test_scheme_multimode_gain(nominal_results):
    assert (nominal_results["pa-mm"].report.sum_rate
            >= nominal_results["pa-sm"].report.sum_rate)


def test_scheme_discrete_close_to_continuous(nominal_results):
    pa = nominal_results["pa-mm"].report.sum_rate
    dp = nominal_results["dp-mm"].report.sum_rate
    assert dp <= pa + 1e-9
    assert dp >= 0.9 * pa


def test_scheme_traces_nondecreasing(nominal_results):
    for res in nominal_results.values():
        assert np.all(np.diff(res.trace) >= -1e-9)


def test_scheme_all_users_reported(nominal_results):
    for res in nominal_results.values():
        assert res.report.per_user_rate.shape == (8,)
        assert np.all(res.report.per_user_rate >= 0)
        assert res.report.sum_rate == pytest.approx(
            res.report.per_user_rate.sum())


def test_single_mode_uses_time_slots(nominal_results):
    res = nominal_results["pa-sm"]
    assert len(res.slots) == 2
    served = np.concatenate([s.user_indices for s in res.slots])
    assert sorted(served.tolist()) == list(range(8))


def test_parse_scheme_variants():
    assert parse_scheme("PA-MMPASS").name == "PA-MM"
    assert parse_scheme("pi_sm").name == "PI-SM"
    with pytest.raises(ValueError):
        parse_scheme("xx-yy")
