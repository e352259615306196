"""Benchmark games with a continuum of players.

A game separates sampling from evaluation. ``sample_context`` draws the
other-player quantities a utility sample needs (neighbor actions under the
frozen profile), and ``payoff`` evaluates the utility of an acting player for
an override action given that context. Keeping the two apart lets the
regret estimator score many candidate actions against one set of neighbor
samples, and lets the SPSG estimator differentiate through the acting
player's action only.

``payoff`` is elementwise with numpy broadcasting over leading axes:
players (..., d_I), actions (..., d_A), context arrays (..., d_A).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from .measures import (
    RngLike,
    as_generator,
    roberts_sequence,
    sample_uniform_box,
    trunc_gauss_mass_at,
    trunc_gauss_sample_at,
)
from .nnet import OutputMap

Profile = Callable[[np.ndarray, np.ndarray], np.ndarray]
Context = Dict[str, np.ndarray]


def ising_bias_1d(players):
    x = players[..., 0]
    return np.sin(10 * np.pi * x) + np.cos(14 * np.pi * x)


def ising_bias_2d(players):
    x, y = players[..., 0], players[..., 1]
    return np.sin(4 * np.pi * x) + np.sin(6 * np.pi * y) + np.sin(5 * np.pi * (x + y))


def cournot_cost(players):
    x = players[..., 0]
    return 0.5 + 0.25 * np.sin(10 * np.pi * x) + 0.25 * np.sin(14 * np.pi * x)


def crowding_value(actions):
    """Per-coordinate -sin(4 pi s)/2 - cos(6 pi s)/2, summed over coordinates."""
    return np.sum(-0.5 * np.sin(4 * np.pi * actions) - 0.5 * np.cos(6 * np.pi * actions), axis=-1)


def crowding_value_grad(actions):
    return -2 * np.pi * np.cos(4 * np.pi * actions) + 3 * np.pi * np.sin(6 * np.pi * actions)


def gaussian_kernel(x, y, sigma):
    d = x - y
    return np.exp(-np.sum(d * d, axis=-1) / (2.0 * sigma * sigma))


def sample_noise(n, dim, rng: RngLike) -> np.ndarray:
    """Standard-normal noise fed to randomized (mixed-strategy) networks."""
    if dim == 0:
        return np.zeros((n, 0))
    return as_generator(rng).standard_normal((n, dim))


@dataclass
class UtilitySample:
    value: np.ndarray
    dvalue_daction: np.ndarray


class Game:
    """Interface shared by every family; subclasses fill in the sampling and payoff."""

    name = "game"
    d_I = 1
    d_A = 1
    noise_dim = 0
    total_mass = 1.0
    action_set: OutputMap = OutputMap.interval()

    def params(self) -> dict:
        return {}

    def sample_players(self, n, rng: RngLike) -> np.ndarray:
        return sample_uniform_box(self.d_I, rng, n)

    def sample_context(self, profile: Profile, players, rng: RngLike, n_samples: int = 1) -> Context:
        raise NotImplementedError

    def payoff(self, players, actions, context: Context):
        """Return (value, d value / d action) for each broadcast element."""
        raise NotImplementedError

    def utility(self, profile: Profile, players, actions, rng: RngLike) -> UtilitySample:
        """Single-sample unbiased utility estimate per player, with its own-action derivative.

        The profile is only evaluated at sampled other players; the acting
        player's action comes in through ``actions``.
        """
        players = np.asarray(players, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        single = players.ndim == 1
        if single:
            players, actions = players[None], actions[None]
        ctx = self.sample_context(profile, players, rng, 1)
        value, dvalue = self.payoff(players[:, None, :], actions[:, None, :], ctx)
        value, dvalue = value[:, 0], dvalue[:, 0]
        if single:
            value, dvalue = value[0], dvalue[0]
        return UtilitySample(value, dvalue)

    def action_grid(self, n: int) -> np.ndarray:
        s = self.action_set
        if s.kind == "interval":
            return np.linspace(s.lo, s.hi, n)[:, None]
        if s.kind == "box":
            if s.dim == 1:
                return np.linspace(s.lo, s.hi, n)[:, None]
            return s.lo + (s.hi - s.lo) * roberts_sequence(n, s.dim)
        if s.dim == 1:
            return np.linspace(-1.0, 1.0, n)[:, None]
        raise NotImplementedError("action grids for multi-dimensional balls")


def _neighbor_actions(profile: Profile, neighbors, noise_dim, rng):
    n, k, d = neighbors.shape
    flat = neighbors.reshape(n * k, d)
    noise = sample_noise(n * k, noise_dim, rng)
    a = np.asarray(profile(flat, noise), dtype=np.float64)
    return a.reshape(n, k, -1)


class _LocalNeighborGame(Game):
    """Neighbor j ~ Gaussian of scale ``sigma`` around i, truncated to the unit box."""

    sigma = 0.1

    def neighbor_mass(self, players):
        return trunc_gauss_mass_at(players, self.sigma)

    def sample_context(self, profile, players, rng, n_samples=1):
        g = as_generator(rng)
        players = np.asarray(players, dtype=np.float64)
        centers = np.broadcast_to(players[:, None, :], (players.shape[0], n_samples, self.d_I))
        neighbors = trunc_gauss_sample_at(centers, self.sigma, g)
        return {"neighbor_action": _neighbor_actions(profile, neighbors, self.noise_dim, g)}


class IsingGame(_LocalNeighborGame):
    """u = a b(i) + int_{j ~ nu(i)} a s(j), scalar spins in [-1, 1]."""

    def __init__(self, dim: int = 1, sigma: float = 0.1):
        if dim not in (1, 2):
            raise ValueError("Ising player space must be 1-D or 2-D")
        self.d_I = dim
        self.sigma = float(sigma)
        self.name = f"ising{dim}d"
        self.action_set = OutputMap.interval(-1.0, 1.0)

    def params(self):
        return {"sigma": self.sigma}

    def bias(self, players):
        return ising_bias_1d(players) if self.d_I == 1 else ising_bias_2d(players)

    def payoff(self, players, actions, context):
        a = actions[..., 0]
        field = self.bias(players) + self.neighbor_mass(players) * context["neighbor_action"][..., 0]
        value = a * field
        return value, np.broadcast_to(field, value.shape)[..., None]


class DistIsingGame(_LocalNeighborGame):
    """u = -(a - b(i))^2 - int_{j ~ nu(i)} (a - s(j))^2, i.e. c(i, j) = 1."""

    def __init__(self, dim: int = 1, sigma: float = 0.1):
        if dim not in (1, 2):
            raise ValueError("distance-Ising player space must be 1-D or 2-D")
        self.d_I = dim
        self.sigma = float(sigma)
        self.name = f"dist_ising{dim}d"
        self.action_set = OutputMap.interval(-1.0, 1.0)

    def params(self):
        return {"sigma": self.sigma}

    def bias(self, players):
        return ising_bias_1d(players) if self.d_I == 1 else ising_bias_2d(players)

    def payoff(self, players, actions, context):
        a = actions[..., 0]
        b = self.bias(players)
        m = self.neighbor_mass(players)
        sj = context["neighbor_action"][..., 0]
        value = -((a - b) ** 2) - m * (a - sj) ** 2
        dvalue = -2.0 * (a - b) - 2.0 * m * (a - sj)
        return value, dvalue[..., None]


class CournotGame(Game):
    """u = q (a - b Q) - q c(i), Q = int q(j) dj over the unit interval of firms."""

    name = "cournot"

    def __init__(self, a: float = 2.0, b: float = 1.8):
        self.a, self.b = float(a), float(b)
        self.action_set = OutputMap.interval(0.0, 1.0)

    def params(self):
        return {"a": self.a, "b": self.b}

    def cost(self, players):
        return cournot_cost(players)

    def aggregate(self, players, context):
        # Lebesgue measure on [0, 1] is a probability measure, so q(j) is unbiased for Q.
        return context["neighbor_action"][..., 0]

    def sample_context(self, profile, players, rng, n_samples=1):
        g = as_generator(rng)
        n = np.asarray(players).shape[0]
        others = g.random((n, n_samples, self.d_I))
        return {"neighbor_action": _neighbor_actions(profile, others, self.noise_dim, g)}

    def payoff(self, players, actions, context):
        q = actions[..., 0]
        margin = self.a - self.b * self.aggregate(players, context) - self.cost(players)
        value = q * margin
        return value, np.broadcast_to(margin, value.shape)[..., None]


class LocalCournotGame(CournotGame):
    """Cournot with price driven by Q(i) = int_{j ~ nu(i)} q(j), nu(i) a truncated Gaussian."""

    name = "local_cournot"

    def __init__(self, a: float = 2.0, b: float = 1.8, sigma: float = 0.1):
        super().__init__(a, b)
        self.sigma = float(sigma)

    def params(self):
        return {"a": self.a, "b": self.b, "sigma": self.sigma}

    def aggregate(self, players, context):
        return trunc_gauss_mass_at(players, self.sigma) * context["neighbor_action"][..., 0]

    def sample_context(self, profile, players, rng, n_samples=1):
        return _LocalNeighborGame.sample_context(self, profile, players, rng, n_samples)


class CrowdingGame(Game):
    """u = v(a) - int_j K(a, s(j)) over players uniform on [0, 1]^2; actions in [0, 1]^2."""

    name = "crowding"
    d_I = 2

    def __init__(self, kernel_sigma: float = 0.01, action_dim: int = 2, noise_dim: int = 2):
        self.kernel_sigma = float(kernel_sigma)
        self.d_A = int(action_dim)
        self.noise_dim = int(noise_dim)
        self.action_set = OutputMap.box(0.0, 1.0, self.d_A)

    def params(self):
        return {"kernel_sigma": self.kernel_sigma}

    def sample_context(self, profile, players, rng, n_samples=1):
        g = as_generator(rng)
        n = np.asarray(players).shape[0]
        others = g.random((n, n_samples, self.d_I))
        return {"neighbor_action": _neighbor_actions(profile, others, self.noise_dim, g)}

    def payoff(self, players, actions, context):
        aj = context["neighbor_action"]
        s2 = self.kernel_sigma**2
        k = gaussian_kernel(actions, aj, self.kernel_sigma)
        value = crowding_value(actions) - k
        dvalue = crowding_value_grad(actions) + (k[..., None] / s2) * (actions - aj)
        return value, dvalue


FAMILIES = ("ising1d", "ising2d", "dist_ising1d", "dist_ising2d", "cournot", "local_cournot", "crowding")


def make_game(family: str, **params) -> Game:
    """Build a game family with its default constants, overridden by ``params``."""
    try:
        if family in ("ising1d", "ising2d"):
            return IsingGame(dim=int(family[5]), **params)
        if family in ("dist_ising1d", "dist_ising2d"):
            return DistIsingGame(dim=int(family[10]), **params)
        if family == "cournot":
            return CournotGame(**params)
        if family == "local_cournot":
            return LocalCournotGame(**params)
        if family == "crowding":
            return CrowdingGame(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for game {family!r}: {exc}") from None
    raise ValueError(f"unknown game family {family!r}; expected one of {', '.join(FAMILIES)}")


def sample_player(game: Game, rng: RngLike) -> np.ndarray:
    return game.sample_players(1, rng)[0]
