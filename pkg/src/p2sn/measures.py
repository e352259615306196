"""Player/neighbor sampling, truncated Gaussian measures, Roberts sequence, RNG streams."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.special import ndtr


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError("stream tags must be non-negative")
        return int(tag)
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RngStream:
    """A named substream: (seed, path) fully determines the draws.

    Backed by numpy's SeedSequence hashing, so sibling paths are
    statistically independent and order of consumption does not matter.
    """

    seed: int
    path: Tuple[int, ...] = ()

    def child(self, *tags) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(_tag_to_int(t) for t in tags))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))


def derive_stream(seed: int, *tags) -> RngStream:
    return RngStream(int(seed)).child(*tags)


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def sample_uniform_box(d: int, rng: RngLike, n=None) -> np.ndarray:
    """Uniform point(s) in [0, 1)^d; shape (d,) or (n, d)."""
    g = as_generator(rng)
    return g.random((d,) if n is None else (n, d))


@dataclass(frozen=True)
class TruncGauss:
    """Gaussian of scale ``scale`` centred at ``center``, restricted to [0, 1]^d without renormalising."""

    center: Tuple[float, ...]
    scale: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=np.float64))
        if not self.scale > 0:
            raise ValueError("truncated Gaussian scale must be positive")
        if np.any(c < 0) or np.any(c > 1):
            raise ValueError("truncated Gaussian center must lie in the unit box")
        object.__setattr__(self, "center", tuple(float(x) for x in c))

    @property
    def dim(self) -> int:
        return len(self.center)


def trunc_gauss_mass_at(centers, scale: float) -> np.ndarray:
    """Mass of the unit box under N(center, scale^2 I); centers shape (..., d)."""
    c = np.asarray(centers, dtype=np.float64)
    per_axis = ndtr((1.0 - c) / scale) - ndtr(-c / scale)
    return np.prod(per_axis, axis=-1)


def trunc_gauss_mass(tg: TruncGauss) -> float:
    return float(trunc_gauss_mass_at(np.asarray(tg.center), tg.scale))


def trunc_gauss_sample_at(centers, scale: float, rng: RngLike, max_rounds: int = 10_000) -> np.ndarray:
    """One draw per center from the normalised truncated Gaussian (rejection).

    The box is a product set and the covariance is diagonal, so each
    coordinate is rejected independently; this is exact.
    """
    g = as_generator(rng)
    c = np.asarray(centers, dtype=np.float64)
    out = c + scale * g.standard_normal(c.shape)
    bad = (out < 0.0) | (out > 1.0)
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError("truncated Gaussian rejection did not terminate")
        idx = np.nonzero(bad)
        out[idx] = c[idx] + scale * g.standard_normal(len(idx[0]))
        bad[idx] = (out[idx] < 0.0) | (out[idx] > 1.0)
    return out


def trunc_gauss_sample(tg: TruncGauss, rng: RngLike, n=None) -> np.ndarray:
    c = np.asarray(tg.center)
    if n is not None:
        c = np.broadcast_to(c, (n, tg.dim))
    return trunc_gauss_sample_at(c, tg.scale, rng)


def generalized_golden_ratio(d: int) -> float:
    """Unique real root > 1 of x^(d+1) = x + 1 (golden ratio for d=1, plastic number for d=2)."""
    x = 2.0
    for _ in range(100):
        fx = x ** (d + 1) - x - 1.0
        step = fx / ((d + 1) * x**d - 1.0)
        x -= step
        if abs(step) < 1e-16:
            break
    return x


def roberts_generator(d: int) -> np.ndarray:
    phi = generalized_golden_ratio(d)
    return phi ** -np.arange(1, d + 1, dtype=np.float64)


def roberts_sequence(n: int, d: int) -> np.ndarray:
    """Points k = 1..n: frac(k * alpha), shape (n, d). No 0.5 offset."""
    if n < 1 or d < 1:
        raise ValueError("roberts_sequence needs n >= 1 and d >= 1")
    k = np.arange(1, n + 1, dtype=np.float64)[:, None]
    return np.mod(k * roberts_generator(d)[None, :], 1.0)


def player_grid(n: int, d: int) -> np.ndarray:
    """Evaluation players: n equally spaced points on [0, 1] (endpoints included) for d = 1, Roberts points otherwise."""
    if d == 1:
        return np.linspace(0.0, 1.0, n)[:, None]
    return roberts_sequence(n, d)
