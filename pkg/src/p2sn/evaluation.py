"""Regret estimation on discretized players/actions, plus independent equilibrium oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .games import CournotGame, DistIsingGame, Game, IsingGame, Profile, sample_noise
from .measures import RngLike, RngStream, as_generator, player_grid

DEFAULT_N_PLAYERS = 256
DEFAULT_N_ACTION_GRID = 201
DEFAULT_N_SAMPLES = 200


@dataclass
class RegretReport:
    player_points: np.ndarray
    regrets: np.ndarray
    mean_regret: float
    max_regret: float
    n_action_grid: int
    n_samples: int

    @classmethod
    def from_regrets(cls, players, regrets, n_action_grid, n_samples) -> "RegretReport":
        regrets = np.asarray(regrets, dtype=np.float64)
        return cls(
            np.asarray(players, dtype=np.float64),
            regrets,
            float(np.mean(regrets)),
            float(np.max(regrets)),
            int(n_action_grid),
            int(n_samples),
        )


def _noise_dim(profile) -> int:
    return int(getattr(profile, "noise_dim", 0))


def expected_utility(game: Game, profile: Profile, i, a_i, n_samples: int, rng: RngLike) -> float:
    """Mean of ``n_samples`` single-sample utility estimates for player i playing a_i."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    i = np.atleast_1d(np.asarray(i, dtype=np.float64))
    a_i = np.atleast_1d(np.asarray(a_i, dtype=np.float64))
    ctx = game.sample_context(profile, i[None, :], rng, n_samples)
    value, _ = game.payoff(i[None, None, :], a_i[None, None, :], ctx)
    return float(np.mean(value))


@dataclass
class PlayerRegret:
    regret: float
    std_error: float
    best_action: np.ndarray
    best_utility: float
    current_utility: float


def player_regret_detail(
    game: Game, profile: Profile, i, action_grid: np.ndarray, n_samples: int, rng: RngLike
) -> PlayerRegret:
    """Grid-best expected utility minus current expected utility, with common random numbers.

    All candidate actions are scored against one set of sampled neighbors.
    For randomized profiles the current utility averages ``n_samples`` own
    noise draws, each paired with one neighbor sample.
    """
    g = as_generator(rng)
    i = np.atleast_1d(np.asarray(i, dtype=np.float64))
    ctx = game.sample_context(profile, i[None, :], g, n_samples)  # arrays (1, k, ...)
    cand, _ = game.payoff(i[None, None, :], action_grid[:, None, :], ctx)  # (m, k)
    nd = _noise_dim(profile)
    if nd:
        noise = sample_noise(n_samples, nd, g)
        own = np.asarray(profile(np.broadcast_to(i, (n_samples, i.size)), noise))
        cur, _ = game.payoff(i[None, :], own[None, :, :], ctx)  # (1, k)
    else:
        own = np.asarray(profile(i[None, :], np.zeros((1, 0))))[0]
        cur, _ = game.payoff(i[None, None, :], own[None, None, :], ctx)
    cur = cur.reshape(-1)
    means = cand.mean(axis=1)
    best = int(np.argmax(means))
    diff = cand[best] - cur
    se = float(np.std(diff, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("inf")
    return PlayerRegret(float(diff.mean()), se, action_grid[best].copy(), float(means[best]), float(cur.mean()))


def player_regret(
    game: Game, profile: Profile, i, n_action_grid: int, n_samples: int, rng: RngLike
) -> float:
    if n_action_grid < 2:
        raise ValueError("n_action_grid must be >= 2")
    return player_regret_detail(game, profile, i, game.action_grid(n_action_grid), n_samples, rng).regret


def regret_report(
    game: Game,
    profile: Profile,
    n_players: int = DEFAULT_N_PLAYERS,
    n_action_grid: int = DEFAULT_N_ACTION_GRID,
    n_samples: int = DEFAULT_N_SAMPLES,
    rng: Optional[RngStream] = None,
    players: Optional[np.ndarray] = None,
) -> RegretReport:
    """Per-player regrets on the evaluation grid; player k uses substream ``rng.child(k)``."""
    if n_players < 2:
        raise ValueError("n_players must be >= 2")
    rng = rng if rng is not None else RngStream(0, ())
    if players is None:
        players = player_grid(n_players, game.d_I)
    grid = game.action_grid(n_action_grid)
    regrets = [
        player_regret_detail(game, profile, players[k], grid, n_samples, rng.child(k)).regret
        for k in range(len(players))
    ]
    return RegretReport.from_regrets(players, regrets, n_action_grid, n_samples)


# --- oracles ------------------------------------------------------------------


@dataclass
class OracleProfile:
    """A 1-D profile tabulated on a grid; evaluates by linear interpolation."""

    grid: np.ndarray  # (n,) player coordinates
    actions: np.ndarray  # (n,)
    method: str
    converged: bool = True
    iterations: int = 0
    noise_dim: int = 0

    def __call__(self, players, noise=None):
        p = np.asarray(players, dtype=np.float64)
        return np.interp(p[..., 0], self.grid, self.actions)[..., None]


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.full(n, 1.0 / (n - 1))
    w[0] = w[-1] = 0.5 / (n - 1)
    return w


def neighbor_quadrature(grid: np.ndarray, sigma: float) -> np.ndarray:
    """W[p, q] such that sum_q W[p, q] f(x_q) ~ int_0^1 f(y) N(y; x_p, sigma^2) dy."""
    d = grid[None, :] - grid[:, None]
    dens = np.exp(-0.5 * (d / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))
    return dens * trapezoid_weights(len(grid))[None, :]


def dist_ising_fixed_point(game: DistIsingGame, grid_n: int = 201, tol: float = 1e-10, max_iters: int = 10_000):
    """Equilibrium of the 1-D distance-Ising game on a grid.

    Each player's utility is a concave quadratic in its own action, so the
    best response is the projection onto [-1, 1] of
    (b(i) + int s dnu(i)) / (1 + mass(nu(i))). The map is a contraction with
    factor max mass/(1 + mass) < 1; iterate it to a fixed point. Masses come
    from the same quadrature as the integral so constants are fixed exactly.
    """
    if grid_n < 3:
        raise ValueError("grid_n must be >= 3")
    if game.d_I != 1:
        raise ValueError("fixed-point oracle covers the 1-D game only")
    grid = np.linspace(0.0, 1.0, grid_n)
    W = neighbor_quadrature(grid, game.sigma)
    mass = W.sum(axis=1)
    b = game.bias(grid[:, None])
    s = np.zeros(grid_n)
    for it in range(1, max_iters + 1):
        new = np.clip((b + W @ s) / (1.0 + mass), -1.0, 1.0)
        change = np.max(np.abs(new - s))
        s = new
        if change <= tol:
            return OracleProfile(grid, s, "dist_ising_fixed_point", True, it)
    return OracleProfile(grid, s, "dist_ising_fixed_point", False, max_iters)


def dist_ising_quadrature_regret(game: DistIsingGame, profile: OracleProfile, action_grid: np.ndarray):
    """Exact-quadrature (no Monte Carlo) regret of a gridded profile at its grid players."""
    grid, s = profile.grid, profile.actions
    W = neighbor_quadrature(grid, game.sigma)
    mass, m1, m2 = W.sum(axis=1), W @ s, W @ (s * s)
    b = game.bias(grid[:, None])

    def u(a):
        return -((a - b) ** 2) - (mass * a * a - 2.0 * a * m1 + m2)

    cand = np.stack([u(np.full_like(s, a)) for a in np.ravel(action_grid)])
    return cand.max(axis=0) - u(s)


def ising_quadrature_regret(game: IsingGame, profile: OracleProfile):
    """Exact-quadrature regret of a gridded 1-D Ising profile; best response is +/-1."""
    grid, s = profile.grid, profile.actions
    h = game.bias(grid[:, None]) + neighbor_quadrature(grid, game.sigma) @ s
    return np.abs(h) - s * h


def ising_br_iteration(game: IsingGame, grid_n: int = 201, max_iters: int = 1000) -> OracleProfile:
    """Synchronous best-response dynamics from sign(b); need not converge.

    Ties (zero local field) keep the current spin.
    """
    if game.d_I != 1:
        raise ValueError("best-response oracle covers the 1-D game only")
    grid = np.linspace(0.0, 1.0, grid_n)
    W = neighbor_quadrature(grid, game.sigma)
    b = game.bias(grid[:, None])
    s = np.where(b >= 0, 1.0, -1.0)
    for it in range(1, max_iters + 1):
        h = b + W @ s
        new = np.where(h > 0, 1.0, np.where(h < 0, -1.0, s))
        if np.array_equal(new, s):
            return OracleProfile(grid, s, "ising_br_iteration", True, it)
        s = new
    return OracleProfile(grid, s, "ising_br_iteration", False, max_iters)


def sublevel_measure(f, level: float, grid_n: int = 4096) -> float:
    """Lebesgue measure of {x in [0, 1] : f(x) < level}, crossings refined by Brent's method."""
    x = np.linspace(0.0, 1.0, grid_n + 1)
    g = f(x) - level
    total = 0.0
    below_from = 0.0 if g[0] < 0 else None
    for k in range(grid_n):
        if (g[k] < 0) != (g[k + 1] < 0):
            root = brentq(lambda t: f(np.array([t]))[0] - level, x[k], x[k + 1], xtol=1e-15)
            if below_from is not None:
                total += root - below_from
                below_from = None
            else:
                below_from = root
    if below_from is not None:
        total += 1.0 - below_from
    return total


def cournot_aggregate_oracle(game: CournotGame, grid_n: int = 4096, tol: float = 1e-12) -> float:
    """Equilibrium aggregate output Q* of the global Cournot game.

    A single firm has measure zero, so its best response is q = 1 when the
    price a - b Q exceeds its marginal cost and q = 0 otherwise. Q* solves
    Q = |{i : c(i) < a - b Q}|; the right side decreases in Q, so bisection.
    """
    if grid_n < 1000:
        raise ValueError("grid_n must be >= 1000")

    def cost(x):
        return game.cost(np.asarray(x)[..., None])

    def residual(q):
        return sublevel_measure(cost, game.a - game.b * q, grid_n) - q

    lo, hi = 0.0, 1.0
    if residual(hi) >= 0:
        return 1.0
    if residual(lo) <= 0:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cournot_equilibrium_profile(game: CournotGame, grid_n: int = 201, q_star: Optional[float] = None):
    q_star = cournot_aggregate_oracle(game) if q_star is None else q_star
    grid = np.linspace(0.0, 1.0, grid_n)
    price = game.a - game.b * q_star
    actions = (game.cost(grid[:, None]) < price).astype(np.float64)
    return OracleProfile(grid, actions, "cournot_threshold")


def trapezoid_aggregate(profile: Profile, n: int = 1024) -> float:
    """int_0^1 q(i) di by the trapezoid rule on n points (pure 1-D profiles)."""
    x = np.linspace(0.0, 1.0, n)
    q = np.asarray(profile(x[:, None], np.zeros((n, 0))))[:, 0]
    return float(np.sum(trapezoid_weights(n) * q))
