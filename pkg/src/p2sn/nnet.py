"""Player-to-strategy network: Fourier features, swish MLP, squashing output map.

Everything is plain numpy at float64. The backward pass is written out by hand
so that gradients with respect to every parameter (including the Fourier
matrix) are exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .measures import RngStream, derive_stream

DEFAULT_FOURIER_FEATURES = 64
DEFAULT_FOURIER_SCALE = 64.0
DEFAULT_HIDDEN = (64, 64)


def sigmoid(x):
    # tanh form: overflow-free and faster than exp-based expit
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def swish(x):
    return x * sigmoid(x)


def swish_grad(x):
    s = sigmoid(x)
    return s + x * s * (1.0 - s)


def fourier_features(B: np.ndarray, players: np.ndarray) -> np.ndarray:
    """sin(B i) for one player (shape (d,)) or a batch (shape (n, d))."""
    B = np.asarray(B, dtype=np.float64)
    players = np.asarray(players, dtype=np.float64)
    if players.shape[-1] != B.shape[1]:
        raise ValueError(
            f"player dimension {players.shape[-1]} does not match Fourier matrix columns {B.shape[1]}"
        )
    return np.sin(players @ B.T)


@dataclass(frozen=True)
class OutputMap:
    """Squashes raw network outputs into a strategy set.

    ``interval``: lo + (hi - lo) * (tanh(r) + 1) / 2, scalar action.
    ``box``: lo + (hi - lo) * sigmoid(r), elementwise over ``dim`` coordinates.
    ``ball``: r / (1 + |r|), the open unit ball in ``dim`` dimensions.
    """

    kind: str
    lo: float = -1.0
    hi: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if self.kind not in ("interval", "box", "ball"):
            raise ValueError(f"unknown output map kind {self.kind!r}")
        if self.kind == "interval" and self.dim != 1:
            raise ValueError("interval output map is scalar (dim=1)")
        if self.kind != "ball" and not self.hi > self.lo:
            raise ValueError("output map needs hi > lo")
        if self.dim < 1:
            raise ValueError("output map dim must be positive")

    @classmethod
    def interval(cls, lo=-1.0, hi=1.0):
        return cls("interval", float(lo), float(hi), 1)

    @classmethod
    def box(cls, lo=0.0, hi=1.0, dim=1):
        return cls("box", float(lo), float(hi), int(dim))

    @classmethod
    def ball(cls, dim=1):
        return cls("ball", -1.0, 1.0, int(dim))

    @property
    def action_dim(self) -> int:
        return self.dim

    def apply(self, raw):
        raw = np.asarray(raw, dtype=np.float64)
        if self.kind == "interval":
            return self.lo + (self.hi - self.lo) * 0.5 * (np.tanh(raw) + 1.0)
        if self.kind == "box":
            return self.lo + (self.hi - self.lo) * sigmoid(raw)
        norm = np.linalg.norm(raw, axis=-1, keepdims=True)
        return raw / (1.0 + norm)

    def vjp(self, raw, upstream):
        """Pull ``upstream`` (d action) back to d raw."""
        raw = np.asarray(raw, dtype=np.float64)
        if self.kind == "interval":
            t = np.tanh(raw)
            return upstream * (self.hi - self.lo) * 0.5 * (1.0 - t * t)
        if self.kind == "box":
            s = sigmoid(raw)
            return upstream * (self.hi - self.lo) * s * (1.0 - s)
        norm = np.linalg.norm(raw, axis=-1, keepdims=True)
        # J = I/(1+n) - r r^T / (n (1+n)^2); the second term vanishes at r = 0.
        safe = np.where(norm > 0.0, norm, 1.0)
        coef = np.where(norm > 0.0, 1.0 / (safe * (1.0 + norm) ** 2), 0.0)
        dot = np.sum(raw * upstream, axis=-1, keepdims=True)
        return upstream / (1.0 + norm) - coef * dot * raw

    def contains(self, actions, atol=0.0) -> bool:
        a = np.asarray(actions)
        if not np.all(np.isfinite(a)):
            return False
        if self.kind == "ball":
            return bool(np.all(np.linalg.norm(a, axis=-1) <= 1.0 + atol))
        return bool(np.all((a >= self.lo - atol) & (a <= self.hi + atol)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi, "dim": self.dim}

    @classmethod
    def from_dict(cls, d: dict) -> "OutputMap":
        return cls(d["kind"], float(d["lo"]), float(d["hi"]), int(d["dim"]))


def output_map_apply(kind: OutputMap, raw):
    return kind.apply(raw)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)

    def __post_init__(self):
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ValueError("dense layer weights rows must equal biases length")


@dataclass
class ParamGradient:
    """Gradient (or any update direction) with the same layout as a P2SN."""

    fourier_matrix: np.ndarray
    layers: List[DenseLayer]

    def arrays(self) -> List[np.ndarray]:
        out = [self.fourier_matrix]
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "ParamGradient":
        arrays = list(arrays)
        layers = [DenseLayer(arrays[k], arrays[k + 1]) for k in range(1, len(arrays), 2)]
        return cls(arrays[0], layers)

    def __add__(self, other: "ParamGradient") -> "ParamGradient":
        return ParamGradient.from_arrays([a + b for a, b in zip(self.arrays(), other.arrays())])

    def __sub__(self, other: "ParamGradient") -> "ParamGradient":
        return ParamGradient.from_arrays([a - b for a, b in zip(self.arrays(), other.arrays())])

    def __mul__(self, c: float) -> "ParamGradient":
        return ParamGradient.from_arrays([a * c for a in self.arrays()])

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


@dataclass
class P2SN:
    fourier_matrix: np.ndarray  # (N_f, d_I)
    layers: List[DenseLayer]
    noise_dim: int
    output_map: OutputMap

    def __post_init__(self):
        n_in = self.fourier_matrix.shape[0] + self.noise_dim
        for k, layer in enumerate(self.layers):
            if layer.weights.shape[1] != n_in:
                raise ValueError(
                    f"layer {k} expects {layer.weights.shape[1]} inputs, previous stage gives {n_in}"
                )
            n_in = layer.weights.shape[0]
        if n_in != self.output_map.action_dim:
            raise ValueError(
                f"last layer width {n_in} does not match action dimension {self.output_map.action_dim}"
            )

    @property
    def player_dim(self) -> int:
        return self.fourier_matrix.shape[1]

    @property
    def action_dim(self) -> int:
        return self.output_map.action_dim

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def arrays(self) -> List[np.ndarray]:
        out = [self.fourier_matrix]
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    def array_names(self) -> List[str]:
        names = ["fourier_matrix"]
        for k in range(len(self.layers)):
            names += [f"layers.{k}.weights", f"layers.{k}.biases"]
        return names

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "P2SN":
        arrays = list(arrays)
        layers = [DenseLayer(arrays[k], arrays[k + 1]) for k in range(1, len(arrays), 2)]
        return P2SN(arrays[0], layers, self.noise_dim, self.output_map)

    def copy(self) -> "P2SN":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def __call__(self, players, noise=None):
        return forward(self, players, noise)


def init_p2sn(
    d_I: int,
    N_f: int = DEFAULT_FOURIER_FEATURES,
    hidden_sizes: Sequence[int] = DEFAULT_HIDDEN,
    noise_dim: int = 0,
    output_map: Optional[OutputMap] = None,
    seed=0,
    fourier_scale: float = DEFAULT_FOURIER_SCALE,
) -> P2SN:
    """He-normal dense weights, zero biases, Fourier matrix ~ N(0, fourier_scale^2).

    ``seed`` may be an int or an :class:`RngStream`.
    """
    if d_I < 1 or N_f < 1 or noise_dim < 0 or any(h < 1 for h in hidden_sizes):
        raise ValueError("network sizes must be positive")
    output_map = output_map or OutputMap.interval()
    stream = seed if isinstance(seed, RngStream) else derive_stream(int(seed), "init")
    rng = stream.generator()
    B = rng.normal(0.0, fourier_scale, size=(N_f, d_I))
    widths = [N_f + noise_dim, *hidden_sizes, output_map.action_dim]
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        layers.append(DenseLayer(W, np.zeros(fan_out)))
    return P2SN(B, layers, int(noise_dim), output_map)


@dataclass
class ForwardCache:
    players: np.ndarray
    proj: np.ndarray  # B i, pre-sine
    inputs: List[np.ndarray] = field(default_factory=list)  # input to each dense layer
    pre: List[np.ndarray] = field(default_factory=list)  # pre-activation of each dense layer
    single: bool = False


def _as_batch(net: P2SN, players, noise):
    players = np.asarray(players, dtype=np.float64)
    single = players.ndim == 1
    if single:
        players = players[None, :]
    if players.shape[1] != net.player_dim:
        raise ValueError(f"player dimension {players.shape[1]} != network input {net.player_dim}")
    n = players.shape[0]
    if net.noise_dim == 0:
        noise = np.zeros((n, 0))
    else:
        if noise is None:
            raise ValueError(f"network expects noise of dimension {net.noise_dim}")
        noise = np.asarray(noise, dtype=np.float64)
        if noise.ndim == 1:
            noise = noise[None, :]
        if noise.shape != (n, net.noise_dim):
            raise ValueError(f"noise shape {noise.shape} != {(n, net.noise_dim)}")
    return players, noise, single


def forward_with_cache(net: P2SN, players, noise=None):
    players, noise, single = _as_batch(net, players, noise)
    proj = players @ net.fourier_matrix.T
    h = np.sin(proj)
    if net.noise_dim:
        h = np.concatenate([h, noise], axis=1)
    cache = ForwardCache(players, proj, single=single)
    last = len(net.layers) - 1
    for k, layer in enumerate(net.layers):
        cache.inputs.append(h)
        z = h @ layer.weights.T + layer.biases
        cache.pre.append(z)
        h = z if k == last else swish(z)
    actions = net.output_map.apply(h)
    return (actions[0] if single else actions), cache


def forward(net: P2SN, players, noise=None):
    """Actions for one player (d_I,) or a batch (n, d_I). Noise is ignored when noise_dim = 0."""
    return forward_with_cache(net, players, noise)[0]


def backward(net: P2SN, cache: ForwardCache, upstream) -> ParamGradient:
    """Gradient of sum_n upstream[n] . action[n] with respect to every parameter."""
    g = np.asarray(upstream, dtype=np.float64)
    if cache.single and g.ndim == 1:
        g = g[None, :]
    g = net.output_map.vjp(cache.pre[-1], g)
    grads = []
    last = len(net.layers) - 1
    for k in range(last, -1, -1):
        layer = net.layers[k]
        if k != last:
            g = g * swish_grad(cache.pre[k])
        grads.append(DenseLayer(g.T @ cache.inputs[k], g.sum(axis=0)))
        g = g @ layer.weights
    grads.reverse()
    n_f = net.fourier_matrix.shape[0]
    g_feat = g[:, :n_f] * np.cos(cache.proj)
    dB = g_feat.T @ cache.players
    return ParamGradient(dB, grads)


def grad_params(net: P2SN, players, noise, upstream) -> ParamGradient:
    _, cache = forward_with_cache(net, players, noise)
    return backward(net, cache, upstream)


def zeros_like(net: P2SN) -> ParamGradient:
    return ParamGradient.from_arrays([np.zeros_like(a) for a in net.arrays()])


# --- checkpoint files -------------------------------------------------------
#
# Layout: 8-byte magic b"P2SNCKPT", little-endian uint64 header length H, H bytes
# of UTF-8 JSON, then the raw data section. Header JSON:
#   {"noise_dim": int, "output_map": {...},
#    "arrays": [{"name": str, "shape": [...], "offset": int}, ...]}
# Offsets are byte offsets into the data section; every array is stored
# C-order as little-endian float64 ("<f8").

_MAGIC = b"P2SNCKPT"


def save_checkpoint(net: P2SN, path) -> Path:
    path = Path(path)
    entries, blobs, offset = [], [], 0
    for name, arr in zip(net.array_names(), net.arrays()):
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = json.dumps(
        {"noise_dim": net.noise_dim, "output_map": net.output_map.to_dict(), "arrays": entries},
        sort_keys=True,
    ).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for blob in blobs:
                fh.write(blob)
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> P2SN:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path} is not a P2SN checkpoint")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    data = raw[16 + hlen :]
    arrays = []
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=start).reshape(shape)
        arrays.append(arr.astype(np.float64))
    layers = [DenseLayer(arrays[k], arrays[k + 1]) for k in range(1, len(arrays), 2)]
    return P2SN(arrays[0], layers, int(header["noise_dim"]), OutputMap.from_dict(header["output_map"]))
