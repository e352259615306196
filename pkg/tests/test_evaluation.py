import math

import numpy as np
import pytest
from conftest import ConstProfile, FnProfile

import p2sn.evaluation as ev
from p2sn.evaluation import (
    OracleProfile,
    RegretReport,
    cournot_aggregate_oracle,
    cournot_equilibrium_profile,
    dist_ising_fixed_point,
    dist_ising_quadrature_regret,
    expected_utility,
    ising_br_iteration,
    ising_quadrature_regret,
    player_regret,
    player_regret_detail,
    regret_report,
    sublevel_measure,
    trapezoid_aggregate,
)
from p2sn.games import CournotGame, DistIsingGame, IsingGame, cournot_cost, ising_bias_1d, make_game
from p2sn.measures import derive_stream
from p2sn.nnet import OutputMap, init_p2sn


class ConstBiasDistIsing(DistIsingGame):
    def __init__(self, value):
        super().__init__(1)
        self.value = value

    def bias(self, players):
        return np.full(np.shape(players)[:-1], float(self.value))


class ConstBiasIsing(IsingGame):
    def __init__(self, value):
        super().__init__(1)
        self.value = value

    def bias(self, players):
        return np.full(np.shape(players)[:-1], float(self.value))


class ConstCostCournot(CournotGame):
    def __init__(self, c):
        super().__init__()
        self.c = c

    def cost(self, players):
        return np.full(np.shape(players)[:-1], float(self.c))


def test_expected_utility_deterministic_case():
    g = IsingGame(1)
    i = np.array([0.3])
    val = expected_utility(g, ConstProfile(0.0), i, np.array([0.4]), 50, derive_stream(0, "e"))
    assert val == pytest.approx(0.4 * ising_bias_1d(i), abs=1e-14)
    with pytest.raises(ValueError):
        expected_utility(g, ConstProfile(0.0), i, np.array([0.4]), 0, derive_stream(0, "e"))


def test_expected_utility_variance_and_determinism():
    g = CournotGame()
    prof = FnProfile(lambda j: 0.5 + 0.5 * np.sin(6 * j))
    i, a = np.array([0.2]), np.array([0.8])

    def draws(n, tag):
        return np.array([expected_utility(g, prof, i, a, n, derive_stream(1, tag, k)) for k in range(2000)])

    ratio = draws(10, "a").var() / draws(40, "b").var()
    assert 2.0 < ratio < 8.0
    assert expected_utility(g, prof, i, a, 10, derive_stream(2)) == expected_utility(g, prof, i, a, 10, derive_stream(2))


def test_cournot_regret_closed_form():
    r = player_regret(CournotGame(), ConstProfile(0.0), np.array([0.0]), 201, 50, derive_stream(0, "r"))
    assert r == pytest.approx(1.5, abs=1e-14)
    with pytest.raises(ValueError):
        player_regret(CournotGame(), ConstProfile(0.0), np.array([0.0]), 1, 50, derive_stream(0, "r"))


def test_regret_of_grid_best_response_is_zero():
    g = CournotGame()
    prof = cournot_equilibrium_profile(g, 2001)
    # players well away from the price threshold: margins keep one sign for every neighbor draw
    for x in (0.05, 0.15):
        i = np.array([x])
        assert abs(2.0 - 1.8 * cournot_aggregate_oracle(g) - cournot_cost(i)) > 0.25
        r = player_regret(g, prof, i, 201, 50, derive_stream(0, "b"))
        assert r == pytest.approx(0.0, abs=1e-14)


def test_regret_noise_lower_bound():
    game = make_game("dist_ising1d")
    net = init_p2sn(1, 16, [16], 0, OutputMap.interval(), seed=3)
    grid = game.action_grid(51)
    for k, x in enumerate(np.linspace(0, 1, 40)):
        d = player_regret_detail(game, net, np.array([x]), grid, 100, derive_stream(5, k))
        assert d.regret >= -3 * d.std_error


def test_report_aggregates():
    rep = RegretReport.from_regrets(np.zeros((4, 1)), [0.0, 1.0, 0.0, 0.0], 3, 5)
    assert rep.mean_regret == 0.25 and rep.max_regret == 1.0
    zero = regret_report(ConstBiasIsing(0.0), ConstProfile(0.0), 8, 11, 5, derive_stream(0))
    # zero field and zero neighbors: every action has utility 0
    assert zero.mean_regret == 0.0 and zero.max_regret == 0.0
    game = make_game("cournot")
    net = init_p2sn(1, 16, [16], 0, OutputMap.interval(0, 1), seed=2)
    rep = regret_report(game, net, 16, 21, 30, derive_stream(1))
    assert rep.mean_regret <= rep.max_regret
    assert rep.max_regret <= np.sum(np.maximum(rep.regrets, 0)) + 1e-15
    assert len(rep.regrets) == len(rep.player_points) == 16
    with pytest.raises(ValueError):
        regret_report(game, net, 1, 21, 30, derive_stream(1))


def test_report_matches_brute_force_loop():
    game = make_game("cournot")
    net = init_p2sn(1, 16, [16], 0, OutputMap.interval(0, 1), seed=4)
    n_players, n_grid, n_samples = 12, 21, 25
    stream = derive_stream(9, "eval")
    rep = regret_report(game, net, n_players, n_grid, n_samples, stream)
    players = np.linspace(0, 1, n_players)
    actions = np.linspace(0, 1, n_grid)
    for k, x in enumerate(players):
        g = stream.child(k).generator()
        others = g.random((1, n_samples, 1))
        q = net(others[0], np.zeros((n_samples, 0)))[:, 0]
        c = 0.5 + 0.25 * math.sin(10 * math.pi * x) + 0.25 * math.sin(14 * math.pi * x)

        def u(a):
            return sum(a * (2.0 - 1.8 * qj) - a * c for qj in q) / n_samples

        current = net(np.array([[x]]))[0, 0]
        brute = max(u(a) for a in actions) - u(current)
        assert rep.regrets[k] == pytest.approx(brute, abs=1e-12)


def test_randomized_profile_regret():
    game = make_game("crowding")
    net = init_p2sn(2, 8, [8], 2, game.action_set, seed=0)
    rep = regret_report(game, net, 8, 64, 20, derive_stream(2))
    assert np.all(np.isfinite(rep.regrets))
    assert rep.player_points.shape == (8, 2)


def test_fixed_point_trivial_fields():
    zero = dist_ising_fixed_point(ConstBiasDistIsing(0.0), 51)
    assert zero.converged and np.all(zero.actions == 0.0)
    one = dist_ising_fixed_point(ConstBiasDistIsing(1.0), 51)
    assert one.converged
    np.testing.assert_allclose(one.actions, 1.0, atol=1e-10)
    with pytest.raises(ValueError):
        dist_ising_fixed_point(DistIsingGame(1), 2)


def test_fixed_point_is_an_equilibrium_under_quadrature():
    game = DistIsingGame(1)
    prof = dist_ising_fixed_point(game, 201)
    assert prof.converged
    assert np.all(np.abs(prof.actions) <= 1.0)
    regret = dist_ising_quadrature_regret(game, prof, np.linspace(-1, 1, 4001))
    assert np.max(regret) <= 1e-6


def test_fixed_point_satisfies_projected_first_order_condition():
    game = DistIsingGame(1)
    prof = dist_ising_fixed_point(game, 201)
    W = ev.neighbor_quadrature(prof.grid, game.sigma)
    target = (game.bias(prof.grid[:, None]) + W @ prof.actions) / (1 + W.sum(1))
    np.testing.assert_allclose(prof.actions, np.clip(target, -1, 1), atol=1e-9)


def test_br_iteration_examples(monkeypatch):
    one = ising_br_iteration(ConstBiasIsing(1.0), 51)
    assert one.converged and one.iterations == 1 and np.all(one.actions == 1.0)
    monkeypatch.setattr(ev, "neighbor_quadrature", lambda grid, sigma: np.zeros((len(grid), len(grid))))
    game = IsingGame(1)
    alone = ising_br_iteration(game, 101)
    b = game.bias(alone.grid[:, None])
    assert alone.converged and alone.iterations == 1
    np.testing.assert_array_equal(alone.actions, np.where(b >= 0, 1.0, -1.0))


def test_br_fixed_point_has_zero_quadrature_regret():
    game = IsingGame(1)
    prof = ising_br_iteration(game, 201)
    assert prof.converged
    assert np.all(np.abs(prof.actions) == 1.0)
    assert np.max(ising_quadrature_regret(game, prof)) <= 1e-12


def test_sublevel_measure():
    assert sublevel_measure(lambda x: x, 0.3, 1000) == pytest.approx(0.3, abs=1e-14)
    assert sublevel_measure(lambda x: np.sin(2 * np.pi * x), 0.0, 1000) == pytest.approx(0.5, abs=1e-12)
    assert sublevel_measure(lambda x: np.ones_like(x), 0.5, 1000) == 0.0


def test_cournot_oracle_corners():
    assert cournot_aggregate_oracle(ConstCostCournot(0.0)) == 1.0
    assert cournot_aggregate_oracle(ConstCostCournot(2.0)) == 0.0
    with pytest.raises(ValueError):
        cournot_aggregate_oracle(CournotGame(), grid_n=100)


def test_cournot_oracle_matches_dense_grid_bisection():
    game = CournotGame()
    q = cournot_aggregate_oracle(game)
    x = (np.arange(2_000_000) + 0.5) / 2_000_000
    c = cournot_cost(x[:, None])
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.mean(c < 2.0 - 1.8 * mid) > mid:
            lo = mid
        else:
            hi = mid
    assert q == pytest.approx(lo, abs=1e-5)
    residual = sublevel_measure(lambda t: cournot_cost(np.asarray(t)[..., None]), 2.0 - 1.8 * q, 4096) - q
    assert abs(residual) <= 1e-6


def test_cournot_threshold_profile():
    game = CournotGame()
    prof = cournot_equilibrium_profile(game, 2001)
    assert set(np.unique(prof.actions)) <= {0.0, 1.0}
    assert trapezoid_aggregate(prof, 20001) == pytest.approx(cournot_aggregate_oracle(game), abs=2e-3)


def test_oracle_profile_interpolates():
    p = OracleProfile(np.array([0.0, 1.0]), np.array([-1.0, 1.0]), "t")
    np.testing.assert_allclose(p(np.array([[0.25], [0.5]])), [[-0.5], [0.0]])


def test_grid_argmax_profile_has_small_regret():
    game = DistIsingGame(1)
    n_players, grid = 64, game.action_grid(201)
    fp = dist_ising_fixed_point(game, n_players)
    # snap the exact best response to the nearest grid action
    snapped = grid[np.abs(grid[:, 0][None, :] - fp.actions[:, None]).argmin(1), 0]
    prof = OracleProfile(fp.grid, snapped, "snapped")
    stream = derive_stream(3, "argmax")
    details = [
        player_regret_detail(game, prof, np.array([x]), grid, 200, stream.child(k)) for k, x in enumerate(fp.grid)
    ]
    rep = regret_report(game, prof, n_players, 201, 200, stream)
    np.testing.assert_allclose(rep.regrets, [d.regret for d in details])
    pooled = math.sqrt(np.mean([d.std_error**2 for d in details]))
    assert rep.mean_regret <= 3 * pooled
