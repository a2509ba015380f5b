"""Reference pipeline: a small deterministic DiT-style latent sampler.

The pipeline is a stand-in for a real diffusion transformer with the pieces
the recorder needs to exercise: a rectified-flow scheduler exposing (a_t,
b_t), patchified latent tokens concatenated after text tokens, per-block
timestep modulation, and named hook points ("blocks.<i>.pre_attention",
"blocks.<i>.output") that observers can subscribe to without perturbing the
computation.  All weights derive from the model identifier, so runs are
bit-reproducible given (prompt, seed).
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np


def _stable_seed(*parts: str | int) -> np.random.Generator:
    crc = 0
    for part in parts:
        crc = zlib.crc32(str(part).encode(), crc)
    return np.random.default_rng(crc)


@dataclass(frozen=True)
class RectifiedFlowScheduler:
    """Linear mixture schedule a_t = 1 - t/T, b_t = t/T."""

    T: int
    a: np.ndarray = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.arange(self.T + 1, dtype=np.float64)
        object.__setattr__(self, "a", 1.0 - t / self.T)
        object.__setattr__(self, "b", t / self.T)

    # matches the byte value the trajectory format assigns to rectified flow
    kind_byte = 2


class ToyDiTPipeline:
    """Two-block latent transformer over patch tokens with AdaLN-style modulation."""

    def __init__(self, model_id: str, steps: int = 12, channels: int = 4,
                 height: int = 16, width: int = 16, patch: int = 2,
                 text_tokens: int = 8, depth: int = 2):
        if height % patch or width % patch:
            raise ValueError("latent size must be divisible by the patch size")
        self.model_id = model_id
        self.scheduler = RectifiedFlowScheduler(T=steps)
        self.channels = channels
        self.height = height
        self.width = width
        self.patch = patch
        self.text_tokens = text_tokens
        self.depth = depth
        self.token_dim = channels * patch * patch
        self.image_tokens = (height // patch) * (width // patch)
        seq = text_tokens + self.image_tokens

        rng = _stable_seed("weights", model_id)
        d = self.token_dim
        self.mod_weights = [rng.standard_normal((d, 2 * d)) / math.sqrt(d) for _ in range(depth)]
        self.mix = [rng.standard_normal((seq, seq)) / math.sqrt(seq) for _ in range(depth)]
        self.mlp = [rng.standard_normal((d, d)) / math.sqrt(d) for _ in range(depth)]
        self.out_proj = rng.standard_normal((d, d)) / math.sqrt(d)

    # ---- module graph ----------------------------------------------------

    def hook_points(self) -> list[str]:
        points = []
        for i in range(self.depth):
            points.append(f"blocks.{i}.pre_attention")
            points.append(f"blocks.{i}.output")
        return points

    @property
    def first_block_input_path(self) -> str:
        return "blocks.0.pre_attention"

    @property
    def last_block_output_path(self) -> str:
        return f"blocks.{self.depth - 1}.output"

    @property
    def image_token_span(self) -> tuple[int, int]:
        return self.text_tokens, self.text_tokens + self.image_tokens

    # ---- token plumbing ---------------------------------------------------

    def patchify(self, x: np.ndarray) -> np.ndarray:
        C, H, W, p = self.channels, self.height, self.width, self.patch
        gh, gw = H // p, W // p
        tokens = x.reshape(C, gh, p, gw, p).transpose(1, 3, 0, 2, 4).reshape(gh * gw, C * p * p)
        return tokens

    def unpatchify(self, tokens: np.ndarray) -> np.ndarray:
        C, H, W, p = self.channels, self.height, self.width, self.patch
        gh, gw = H // p, W // p
        return tokens.reshape(gh, gw, C, p, p).transpose(2, 0, 3, 1, 4).reshape(C, H, W)

    def _text_embedding(self, prompt: str) -> np.ndarray:
        return _stable_seed("prompt", self.model_id, prompt).standard_normal((self.text_tokens, self.token_dim))

    def _timestep_embedding(self, t: int) -> np.ndarray:
        half = self.token_dim // 2
        freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
        angles = t * freqs
        emb = np.concatenate([np.sin(angles), np.cos(angles)])
        if len(emb) < self.token_dim:
            emb = np.concatenate([emb, np.zeros(self.token_dim - len(emb))])
        return emb

    # ---- forward and sampling ----------------------------------------------

    def _forward(self, x_t: np.ndarray, t: int, text: np.ndarray, observers) -> np.ndarray:
        seq = np.concatenate([text, self.patchify(x_t)], axis=0)
        emb = self._timestep_embedding(t)
        for i in range(self.depth):
            mod = emb @ self.mod_weights[i]
            scale, shift = mod[: self.token_dim], mod[self.token_dim:]
            h = seq * (1.0 + scale) + shift  # timestep modulation
            self._fire(observers, f"blocks.{i}.pre_attention", t, h)
            h = self.mix[i] @ h
            h = h + np.tanh(h @ self.mlp[i])
            self._fire(observers, f"blocks.{i}.output", t, h)
            seq = h
        img = seq[self.text_tokens:] @ self.out_proj
        return self.unpatchify(img)

    @staticmethod
    def _fire(observers, path: str, t: int, value: np.ndarray) -> None:
        if observers and path in observers:
            observers[path](t, value.copy())

    def run(self, prompt: str, seed: int, observers: dict | None = None) -> np.ndarray:
        """Sample one latent; observers receive (t, tensor) at their hook points."""
        unknown = set(observers or ()) - set(self.hook_points())
        if unknown:
            raise KeyError(f"unknown hook point(s) {sorted(unknown)}; available: {self.hook_points()}")
        sched = self.scheduler
        x = _stable_seed("noise", seed).standard_normal((self.channels, self.height, self.width))
        text = self._text_embedding(prompt)
        for t in range(sched.T, 0, -1):
            x0_hat = self._forward(x, t, text, observers)
            eps_hat = (x - sched.a[t] * x0_hat) / sched.b[t]
            x = sched.a[t - 1] * x0_hat + sched.b[t - 1] * eps_hat
        return x


_REGISTRY = {
    "toy-dit-16": lambda: ToyDiTPipeline("toy-dit-16"),
    "toy-dit-16-deep": lambda: ToyDiTPipeline("toy-dit-16-deep", depth=3, steps=16),
}


def load_pipeline(model_id: str) -> ToyDiTPipeline:
    if model_id not in _REGISTRY:
        raise KeyError(f"unknown model {model_id!r}; available: {sorted(_REGISTRY)}")
    return _REGISTRY[model_id]()
