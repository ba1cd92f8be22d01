"""Bias-free ReLU generators: forward passes, activation masks and masked cascades.

A network is a list of dense layers ``W_1, ..., W_d`` acting as
``relu(W_d ... relu(W_1 z))``.  The masked cascade at ``h`` is the local linear
map ``Lambda_h = W_{d,+,h} ... W_{1,+,h}`` that reproduces the forward pass at
``h`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class GeneratorNetwork:
    """Immutable stack of layer matrices, ``layers[i]`` has shape (dims[i+1], dims[i]).

    Shape chaining and finiteness are always checked.  Expansivity
    (strictly increasing dims) is required by the samplers, not here, so that
    small hand-built networks can be used as fixtures.
    """

    layers: tuple

    def __post_init__(self):
        if len(self.layers) == 0:
            raise ValueError("network needs at least one layer")
        mats = []
        for i, W in enumerate(self.layers):
            W = np.array(W, dtype=np.float64)
            if W.ndim != 2:
                raise ValueError(f"layer {i} is not a matrix")
            if not np.all(np.isfinite(W)):
                raise ValueError(f"layer {i} has non-finite entries")
            if mats and W.shape[1] != mats[-1].shape[0]:
                raise ValueError(
                    f"layer {i} expects input dim {W.shape[1]}, previous layer "
                    f"outputs {mats[-1].shape[0]}"
                )
            W.setflags(write=False)
            mats.append(W)
        object.__setattr__(self, "layers", tuple(mats))

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> tuple:
        return (self.layers[0].shape[1],) + tuple(W.shape[0] for W in self.layers)

    @property
    def latent_dim(self) -> int:
        return self.layers[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].shape[0]

    @property
    def expansive(self) -> bool:
        d = self.dims
        return all(a < b for a, b in zip(d, d[1:]))

    def __eq__(self, other):
        if not isinstance(other, GeneratorNetwork):
            return NotImplemented
        return self.dims == other.dims and all(
            np.array_equal(a, b) for a, b in zip(self.layers, other.layers)
        )

    __hash__ = None


@dataclass(frozen=True)
class ActivationCascade:
    masks: tuple            # per-layer boolean vectors, True where pre-activation > 0
    effective_matrix: np.ndarray
    output: np.ndarray


def _check_latent(net: GeneratorNetwork, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != net.latent_dim:
        raise ValueError(f"latent vector has length {z.shape[0]}, network expects {net.latent_dim}")
    return z


def forward(net: GeneratorNetwork, z) -> np.ndarray:
    """relu(W_d ... relu(W_1 z)).  ``z`` may also be a (latent_dim, batch) array."""
    x = _check_latent(net, z)
    for W in net.layers:
        x = np.maximum(W @ x, 0.0)
    return x


def rectified_rows(W, h) -> np.ndarray:
    """``diag(W h > 0) W``: rows with non-positive inner product against h are zeroed."""
    W = np.asarray(W, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if W.ndim != 2 or h.ndim != 1 or W.shape[1] != h.shape[0]:
        raise ValueError(f"cannot mask {W.shape} matrix with vector of shape {h.shape}")
    return np.where((W @ h > 0)[:, None], W, 0.0)


def activation_masks(net: GeneratorNetwork, h) -> tuple:
    """Masks of the cascade at ``h``; layer i's mask uses the cascaded pre-activation."""
    x = _check_latent(net, h)
    masks = []
    for W in net.layers:
        pre = W @ x
        mask = pre > 0
        masks.append(mask)
        x = np.where(mask, pre, 0.0)
    return tuple(masks)


def apply_masked(net: GeneratorNetwork, masks, v) -> np.ndarray:
    """``Lambda v`` for the cascade described by ``masks``, without forming Lambda."""
    x = np.asarray(v, dtype=np.float64)
    for W, mask in zip(net.layers, masks):
        x = np.where(mask, W @ x, 0.0)
    return x


def apply_masked_transpose(net: GeneratorNetwork, masks, u) -> np.ndarray:
    """``Lambda^T u`` for the cascade described by ``masks``."""
    x = np.asarray(u, dtype=np.float64)
    for W, mask in zip(reversed(net.layers), reversed(masks)):
        x = W.T @ np.where(mask, x, 0.0)
    return x


def cascade(net: GeneratorNetwork, h) -> ActivationCascade:
    h = _check_latent(net, h)
    masks = activation_masks(net, h)
    lam = np.eye(net.latent_dim)
    for W, mask in zip(net.layers, masks):
        lam = np.where(mask[:, None], W, 0.0) @ lam
    return ActivationCascade(masks=masks, effective_matrix=lam, output=lam @ h)


def _check_dims(dims: Sequence[int]) -> tuple:
    dims = tuple(int(k) for k in dims)
    if len(dims) < 2:
        raise ValueError("need at least a latent and an output dimension")
    if dims[0] < 1:
        raise ValueError("dimensions must be positive")
    if any(a >= b for a, b in zip(dims, dims[1:])):
        raise ValueError(f"dims must be strictly increasing (expansive), got {dims}")
    return dims


def sample_gaussian_network(dims: Sequence[int], seed) -> GeneratorNetwork:
    """Every layer i.i.d. N(0, 1/rows)."""
    dims = _check_dims(dims)
    rng = np.random.default_rng(seed)
    layers = [rng.standard_normal((b, a)) / np.sqrt(b) for a, b in zip(dims, dims[1:])]
    return GeneratorNetwork(tuple(layers))


def sample_truncated_last_layer(rows: int, cols: int, seed) -> np.ndarray:
    """Rows i.i.d. N(0, I/rows), zeroed when their norm exceeds 3*sqrt(cols/rows)."""
    if rows < cols:
        raise ValueError(f"truncated layer needs rows >= cols, got {rows} < {cols}")
    if cols < 1:
        raise ValueError("cols must be positive")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((rows, cols)) / np.sqrt(rows)
    keep = np.linalg.norm(W, axis=1) <= 3.0 * np.sqrt(cols / rows)
    return np.where(keep[:, None], W, 0.0)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed (a plain int, so it can be recorded in reports)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def sample_network(dims: Sequence[int], seed, variance_rule: str = "gaussian") -> GeneratorNetwork:
    """Sample a network under one of the two weight models.

    ``gaussian``: every layer N(0, 1/rows).  ``truncated_last``: inner layers
    Gaussian, last layer drawn by :func:`sample_truncated_last_layer`.
    """
    dims = _check_dims(dims)
    if variance_rule == "gaussian":
        return sample_gaussian_network(dims, seed)
    if variance_rule != "truncated_last":
        raise ValueError(f"unknown variance rule {variance_rule!r}")
    inner_seed, last_seed = derive_seed(seed, 0), derive_seed(seed, 1)
    layers = []
    if len(dims) > 2:
        layers.extend(sample_gaussian_network(dims[:-1], inner_seed).layers)
    layers.append(sample_truncated_last_layer(dims[-1], dims[-2], last_seed))
    return GeneratorNetwork(tuple(layers))
