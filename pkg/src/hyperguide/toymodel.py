"""Differentiable stand-in for cross-attention.

The guidance loop only needs something that turns a latent into per-token
attention maps and is differentiable in the latent.  Here each pixel
holds a d-vector; attention is a per-pixel softmax over its dot products
with fixed unit-norm token embeddings:

    A_j(x, y) = softmax_j( <z[x, y], e_j> / (temperature * sqrt(d)) )

which keeps the per-pixel simplex property of real cross-attention.  A
real attention source can replace this model by matching the small
``forward`` / ``init_latent`` / ``step_perturb`` surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class LatentState:
    """The H x W x d tensor the guidance loop optimizes; value semantics."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"latent must be H x W x d, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("latent contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class ToyModelConfig:
    height: int = 16
    width: int = 16
    embed_dim: int = 8
    temperature: float = 1.0
    perturb_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.embed_dim < 1:
            raise ValueError("height, width, and embed_dim must be at least 1")
        if not (self.temperature > 0):
            raise ValueError("temperature must be positive")
        if self.perturb_sigma < 0:
            raise ValueError("perturb_sigma must be nonnegative")


def token_embeddings(n_tokens: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Fixed random unit-norm embedding per token."""
    if n_tokens < 1:
        raise ValueError("need at least one token")
    e = rng.standard_normal((n_tokens, dim))
    norms = np.linalg.norm(e, axis=1, keepdims=True)
    # a zero draw is probability-zero, but never divide by it
    norms[norms == 0] = 1.0
    return e / norms


def attention_forward(z: ad.Tensor, embeddings: np.ndarray, temperature: float) -> dict[int, ad.Tensor]:
    """Per-token attention maps from a latent tensor; differentiable in z."""
    n_tokens, dim = embeddings.shape
    if z.shape[-1] != dim:
        raise ValueError(
            f"latent channel dim {z.shape[-1]} does not match embedding dim {dim}"
        )
    logits = ad.project_tokens(z, embeddings) * (1.0 / (temperature * np.sqrt(dim)))
    probs = ad.softmax_last(logits)
    return {j: ad.channel(probs, j) for j in range(n_tokens)}


class ToyAttentionModel:
    """Owns the embeddings and the run's random stream.

    Construction draws the embedding table first, so a fixed seed pins
    embeddings, the initial latent, and every perturbation in order.
    """

    def __init__(self, n_tokens: int, config: ToyModelConfig):
        self.config = config
        self.n_tokens = n_tokens
        self._rng = np.random.default_rng(config.seed)
        self.embeddings = token_embeddings(n_tokens, config.embed_dim, self._rng)

    def init_latent(self) -> LatentState:
        """Seeded standard-normal latent of the configured shape."""
        c = self.config
        return LatentState(self._rng.standard_normal((c.height, c.width, c.embed_dim)))

    def forward(self, z: ad.Tensor) -> dict[int, ad.Tensor]:
        return attention_forward(z, self.embeddings, self.config.temperature)

    def attention_values(self, z: LatentState) -> dict[int, np.ndarray]:
        """Plain-array maps for recording; same code path as forward."""
        maps = self.forward(ad.Tensor(z.values))
        return {j: m.value for j, m in maps.items()}

    def step_perturb(self, z: LatentState) -> LatentState:
        """Simulated denoiser drift: add seeded Gaussian noise.

        With sigma zero the latent is returned untouched and the random
        stream does not advance.
        """
        sigma = self.config.perturb_sigma
        if sigma == 0:
            return z
        noise = self._rng.standard_normal(z.values.shape)
        return LatentState(z.values + sigma * noise)
