"""Shared-parameter simultaneous gradient (SPSG) and the ascent update rules.

One SPSG sample: draw a player i from the normalised player measure, compute
its action with the live parameters r, score that action against other
players drawn from the frozen profile s (same values, no gradient path),
scale by the total player mass, and differentiate with respect to r only.
Because the numpy forward pass for the other players never records a
backward cache, the frozen copy is frozen by construction.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .games import Game, sample_noise
from .measures import RngLike, RngStream, as_generator, derive_stream
from .nnet import P2SN, ParamGradient, backward, forward_with_cache, zeros_like

log = logging.getLogger(__name__)

OPTIMIZERS = ("sga", "oga", "adam")


class NonFiniteError(FloatingPointError):
    """Raised when training produces NaN/Inf parameters or gradients."""

    def __init__(self, message, state=None, history=None):
        super().__init__(message)
        self.state = state
        self.history = history or []


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    alpha: float = 1e-3
    beta: Optional[float] = None  # OGA extrapolation weight; None means beta = alpha
    batch_size: int = 256
    steps: int = 1000
    action_smoothing_sigma: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.beta is not None and self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.action_smoothing_sigma < 0:
            raise ValueError("action_smoothing_sigma must be >= 0")


@dataclass
class TrainerState:
    net: P2SN
    previous_gradient: Optional[ParamGradient] = None
    adam_m: Optional[ParamGradient] = None
    adam_v: Optional[ParamGradient] = None
    iteration: int = 0


@dataclass
class IterationLog:
    iteration: int
    wall_time_s: float
    grad_norm: float
    mean_regret: Optional[float] = None
    max_regret: Optional[float] = None


def smoothed_action_grad(value_fn, a, sigma, rng: RngLike, baseline: bool = True):
    """Gaussian-smoothing pseudo-gradient of ``value_fn`` at ``a``.

    Returns z * f(a + sigma z) / sigma per row, an unbiased estimate of the
    gradient of E f(a + sigma z). With ``baseline`` the control variate
    f(a) is subtracted first; E[z] = 0 keeps the estimate unbiased and the
    variance no longer blows up as sigma -> 0.
    """
    if not sigma > 0:
        raise ValueError("smoothing sigma must be positive")
    a = np.asarray(a, dtype=np.float64)
    z = as_generator(rng).standard_normal(a.shape)
    f = np.asarray(value_fn(a + sigma * z))
    if baseline:
        f = f - np.asarray(value_fn(a))
    return f[..., None] * z / sigma if a.ndim > np.ndim(f) else f * z / sigma


def _spsg_sum(net: P2SN, game: Game, n: int, rng: RngLike, smoothing_sigma: float, weight: float):
    g = as_generator(rng)
    players = game.sample_players(n, g)
    noise = sample_noise(n, net.noise_dim, g)
    actions, cache = forward_with_cache(net, players, noise)
    # ``net`` doubles as the frozen profile: evaluating it records nothing to differentiate.
    ctx = game.sample_context(net, players, g, 1)
    p1 = players[:, None, :]
    if smoothing_sigma > 0:

        def value_fn(a):
            return game.payoff(p1, a[:, None, :], ctx)[0][:, 0]

        dvalue = smoothed_action_grad(value_fn, actions, smoothing_sigma, g)
    else:
        dvalue = game.payoff(p1, actions[:, None, :], ctx)[1][:, 0, :]
    upstream = (weight * game.total_mass) * dvalue
    return backward(net, cache, upstream)


def spsg_sample(net: P2SN, game: Game, rng: RngLike, smoothing_sigma: float = 0.0) -> ParamGradient:
    """One unbiased sample of the SPSG direction."""
    return _spsg_sum(net, game, 1, rng, smoothing_sigma, 1.0)


def batch_gradient(
    net: P2SN, game: Game, batch_size: int, rng: RngLike, smoothing_sigma: float = 0.0
) -> ParamGradient:
    """Mean of ``batch_size`` independent SPSG samples.

    All batch randomness comes from one stream, drawn as arrays whose row k
    belongs to slot k, so the result does not depend on how rows are computed.
    """
    return _spsg_sum(net, game, batch_size, rng, smoothing_sigma, 1.0 / batch_size)


def _apply(net: P2SN, direction: ParamGradient) -> P2SN:
    return net.with_arrays([p + d for p, d in zip(net.arrays(), direction.arrays())])


def sga_step(state: TrainerState, grad: ParamGradient, alpha: float) -> TrainerState:
    return replace(
        state,
        net=_apply(state.net, grad * alpha),
        previous_gradient=grad,
        iteration=state.iteration + 1,
    )


def oga_step(state: TrainerState, grad: ParamGradient, alpha: float, beta: float) -> TrainerState:
    prev = state.previous_gradient if state.previous_gradient is not None else grad
    direction = grad * alpha + (grad - prev) * beta
    return replace(
        state,
        net=_apply(state.net, direction),
        previous_gradient=grad,
        iteration=state.iteration + 1,
    )


def adam_step(
    state: TrainerState,
    grad: ParamGradient,
    alpha: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> TrainerState:
    """Bias-corrected adaptive-moment ascent step."""
    t = state.iteration + 1
    m = state.adam_m if state.adam_m is not None else zeros_like(state.net)
    v = state.adam_v if state.adam_v is not None else zeros_like(state.net)
    m_new, v_new, params = [], [], []
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, mk, vk in zip(state.net.arrays(), grad.arrays(), m.arrays(), v.arrays()):
        mk = beta1 * mk + (1.0 - beta1) * g
        vk = beta2 * vk + (1.0 - beta2) * g * g
        params.append(p + alpha * (mk / c1) / (np.sqrt(vk / c2) + eps))
        m_new.append(mk)
        v_new.append(vk)
    return replace(
        state,
        net=state.net.with_arrays(params),
        previous_gradient=grad,
        adam_m=ParamGradient.from_arrays(m_new),
        adam_v=ParamGradient.from_arrays(v_new),
        iteration=t,
    )


def update(state: TrainerState, grad: ParamGradient, config: TrainConfig) -> TrainerState:
    if config.optimizer == "sga":
        return sga_step(state, grad, config.alpha)
    if config.optimizer == "oga":
        beta = config.alpha if config.beta is None else config.beta
        return oga_step(state, grad, config.alpha, beta)
    return adam_step(state, grad, config.alpha, config.adam_beta1, config.adam_beta2, config.adam_eps)


EvalFn = Callable[[P2SN, int], "tuple[float, float]"]


def train(
    net: P2SN,
    game: Game,
    config: TrainConfig,
    stream: Optional[RngStream] = None,
    eval_fn: Optional[EvalFn] = None,
    eval_every: int = 0,
    log_every: int = 0,
):
    """Run ``config.steps`` SPSG iterations.

    ``eval_fn(net, iteration) -> (mean_regret, max_regret)`` is called at
    iteration 0, every ``eval_every`` iterations, and after the last step.
    Returns (final TrainerState, list of IterationLog). Rows are kept for
    evaluation iterations and every ``log_every`` iterations.
    """
    if net.player_dim != game.d_I or net.action_dim != game.d_A:
        raise ValueError(
            f"network dims (player {net.player_dim}, action {net.action_dim}) do not match "
            f"game {game.name} (player {game.d_I}, action {game.d_A})"
        )
    if net.noise_dim != game.noise_dim:
        log.debug("network noise_dim %d differs from game default %d", net.noise_dim, game.noise_dim)
    stream = stream or derive_stream(config.seed, "train")
    state = TrainerState(net=net)
    history: List[IterationLog] = []
    t0 = time.perf_counter()
    grad_norm = 0.0

    def evaluate(it):
        if eval_fn is None:
            return None, None
        return eval_fn(state.net, it)

    if eval_fn is not None:
        mean_r, max_r = evaluate(0)
        history.append(IterationLog(0, time.perf_counter() - t0, 0.0, mean_r, max_r))

    for it in range(1, config.steps + 1):
        grad = batch_gradient(state.net, game, config.batch_size, stream.child(it), config.action_smoothing_sigma)
        grad_norm = grad.norm()
        if not np.isfinite(grad_norm):
            raise NonFiniteError(f"non-finite gradient at iteration {it}", state, history)
        new_state = update(state, grad, config)
        if not new_state.net.is_finite():
            bad = [
                name
                for name, a in zip(state.net.array_names(), new_state.net.arrays())
                if not np.all(np.isfinite(a))
            ]
            raise NonFiniteError(f"non-finite parameters {bad} after iteration {it}", state, history)
        state = new_state
        is_eval = eval_fn is not None and ((eval_every and it % eval_every == 0) or it == config.steps)
        if is_eval:
            mean_r, max_r = evaluate(it)
            history.append(IterationLog(it, time.perf_counter() - t0, grad_norm, mean_r, max_r))
            log.info("iter %d grad_norm %.4g mean_regret %.4g max_regret %.4g", it, grad_norm, mean_r, max_r)
        elif log_every and it % log_every == 0:
            history.append(IterationLog(it, time.perf_counter() - t0, grad_norm))
    return state, history
