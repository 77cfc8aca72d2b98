"""Toy joint-attention (MMDiT-style) backbone and a CFG Euler sampler.

The image stream is ``noise_tokens`` latent tokens followed by
``source_tokens`` conditioning tokens; the text stream runs in parallel.
Both streams are projected separately and meet in one joint attention per
block. All six projection outputs pass through an :class:`AttnHub`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import numerics as nx
from .hooks import PROJ_ORDER, AttnHub, ProjKind, ProjSite
from .text import stable_hash, tokenize, word_vector

F32 = np.float32


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 12
    d_model: int = 32
    heads: int = 4
    noise_tokens: int = 16
    source_tokens: int = 16
    text_tokens: int = 8
    weight_seed: int = 0

    def __post_init__(self):
        for f in ("num_layers", "d_model", "heads", "noise_tokens", "source_tokens", "text_tokens"):
            if int(getattr(self, f)) <= 0:
                raise ValueError(f"{f} must be positive, got {getattr(self, f)}")
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")

    @property
    def image_tokens(self) -> int:
        return self.noise_tokens + self.source_tokens

    @property
    def source_start(self) -> int:
        return self.noise_tokens

    @property
    def sites_per_forward(self) -> int:
        return 6 * self.num_layers


@dataclass(frozen=True)
class SampleConfig:
    steps: int = 28
    cfg_scale: float = 4.0
    seed: int = 0
    negative_prompt: str = ""

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.cfg_scale < 0:
            raise ValueError(f"cfg_scale must be non-negative, got {self.cfg_scale}")


def load_config(path) -> tuple[ModelConfig, SampleConfig]:
    """Read a ``key=value`` file holding model and sampling settings.

    Blank lines and ``#`` comments are ignored; unknown keys are an error.
    """
    model_keys = {f.name: f.type for f in fields(ModelConfig)}
    sample_keys = {"steps": int, "cfg_scale": float, "seed": int, "negative_prompt": str}
    model_kw, sample_kw = {}, {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in model_keys:
            model_kw[key] = int(value)
        elif key in sample_keys:
            sample_kw[key] = sample_keys[key](value)
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return ModelConfig(**model_kw), SampleConfig(**sample_kw)


@dataclass(frozen=True)
class LatentImage:
    tokens: np.ndarray  # (1, source_tokens, d_model)
    label: str = ""


@dataclass
class Block:
    proj: dict  # ProjKind -> (1, d, d)
    img_qkv: np.ndarray  # (1, d, 3d), the three image projections side by side
    txt_qkv: np.ndarray
    img_out: np.ndarray
    txt_out: np.ndarray
    img_ff1: np.ndarray
    img_ff2: np.ndarray
    txt_ff1: np.ndarray
    txt_ff2: np.ndarray


@dataclass
class Model:
    cfg: ModelConfig
    blocks: list
    final: np.ndarray  # (1, d, d)

    def weights(self) -> list[np.ndarray]:
        out = []
        for b in self.blocks:
            out += [b.proj[k] for k in ProjKind]
            out += [b.img_out, b.txt_out, b.img_ff1, b.img_ff2, b.txt_ff1, b.txt_ff2]
        out.append(self.final)
        return out


def build_model(cfg: ModelConfig) -> Model:
    """Draw all weights from a generator seeded by ``cfg.weight_seed``."""
    rng = np.random.default_rng(cfg.weight_seed)
    d = cfg.d_model

    def lin(d_in, d_out, gain=1.0):
        w = rng.standard_normal((1, d_in, d_out)) * (gain / math.sqrt(d_in))
        w = w.astype(F32)
        w.setflags(write=False)
        return w

    # residual branches shrink with depth so activations stay O(1)
    res_gain = 1.0 / math.sqrt(2 * cfg.num_layers)
    blocks = []
    for _ in range(cfg.num_layers):
        proj = {k: lin(d, d) for k in ProjKind}
        fused = [np.concatenate([proj[k] for k in kinds], axis=2) for kinds in (PROJ_ORDER[:3], PROJ_ORDER[3:])]
        for w in fused:
            w.setflags(write=False)
        blocks.append(Block(
            proj=proj, img_qkv=fused[0], txt_qkv=fused[1],
            img_out=lin(d, d, res_gain), txt_out=lin(d, d, res_gain),
            img_ff1=lin(d, 2 * d), img_ff2=lin(2 * d, d, res_gain),
            txt_ff1=lin(d, 2 * d), txt_ff2=lin(2 * d, d, res_gain),
        ))
    return Model(cfg, blocks, lin(d, d))


def encode_source(label: str, cfg: ModelConfig, seed: int = 0) -> LatentImage:
    """Stand-in for a VAE encoder: seeded Gaussian tokens keyed by label."""
    rng = np.random.default_rng([seed & (2**64 - 1), stable_hash(label, "source")])
    tokens = rng.standard_normal((1, cfg.source_tokens, cfg.d_model)).astype(F32)
    tokens.setflags(write=False)
    return LatentImage(tokens, label)


def encode_text(prompt: str, cfg: ModelConfig) -> np.ndarray:
    """One hashed word vector per word (scaled to ~unit RMS), zero-padded."""
    emb = np.zeros((1, cfg.text_tokens, cfg.d_model), dtype=F32)
    for i, w in enumerate(tokenize(prompt)[: cfg.text_tokens]):
        emb[0, i] = word_vector(w, cfg.d_model, "text-encoder") * math.sqrt(cfg.d_model)
    return emb


def time_embedding(t: float, d: int) -> np.ndarray:
    half = d // 2
    freqs = np.exp(-math.log(1000.0) * np.arange(half) / max(half, 1))
    ang = t * 1000.0 * freqs
    emb = np.zeros(d)
    emb[:half] = np.sin(ang)
    emb[half: 2 * half] = np.cos(ang)
    return emb.astype(F32).reshape(1, 1, d)


# shapes are validated once at the top of forward(); the inner loop skips the checks
_mm = np.matmul


def _layer_sites(layer: int) -> tuple:
    return tuple(ProjSite(layer, k) for k in PROJ_ORDER)


_SITES = [_layer_sites(l) for l in range(64)]


def forward(model: Model, noise: np.ndarray, source: LatentImage, text_emb: np.ndarray,
            step_index: int, hub: AttnHub | None = None, t: float | None = None) -> np.ndarray:
    """One backbone forward; returns the velocity over the noise-half tokens.

    With ``hub=None`` the projections are used directly, which is the
    reference path for checking that an empty hub is a no-op.
    """
    cfg = model.cfg
    d = cfg.d_model
    if noise.shape != (1, cfg.noise_tokens, d):
        raise nx.ShapeError(f"noise shape {noise.shape} != {(1, cfg.noise_tokens, d)}")
    if source.tokens.shape != (1, cfg.source_tokens, d):
        raise nx.ShapeError(f"source shape {source.tokens.shape} != {(1, cfg.source_tokens, d)}")
    if text_emb.shape != (1, cfg.text_tokens, d):
        raise nx.ShapeError(f"text shape {text_emb.shape} != {(1, cfg.text_tokens, d)}")
    if hub is not None:
        if hub.current_step != step_index:
            raise RuntimeError(f"hub is at step {hub.current_step}, forward called for step {step_index}")
        hub.begin_forward()
    if t is None:
        t = 1.0
    n_img = cfg.image_tokens
    noise_in = noise + time_embedding(t, d)
    # joint residual stream: image tokens then text tokens; layernorm is per token
    x = np.concatenate([noise_in, source.tokens, text_emb], axis=1).astype(F32)
    n_tok = x.shape[1]
    qkv = np.empty((1, n_tok, 3 * d), dtype=F32)
    hid = np.empty((1, n_tok, 2 * d), dtype=F32)
    upd = np.empty_like(x)
    img, txt = slice(0, n_img), slice(n_img, n_tok)

    for layer, blk in enumerate(model.blocks):
        h = nx.layernorm(x)
        _mm(h[:, img], blk.img_qkv, out=qkv[:, img])
        _mm(h[:, txt], blk.txt_qkv, out=qkv[:, txt])
        if hub is not None:
            sites = _SITES[layer] if layer < len(_SITES) else _layer_sites(layer)
            views = (qkv[:, img, :d], qkv[:, img, d:2 * d], qkv[:, img, 2 * d:],
                     qkv[:, txt, :d], qkv[:, txt, d:2 * d], qkv[:, txt, 2 * d:])
            for site, view in zip(sites, views):
                y = hub.dispatch(site, view)
                if y is not view:
                    view[...] = y
        a = nx._sdpa(qkv[:, :, :d], qkv[:, :, d:2 * d], qkv[:, :, 2 * d:], cfg.heads)
        _mm(a[:, img], blk.img_out, out=upd[:, img])
        _mm(a[:, txt], blk.txt_out, out=upd[:, txt])
        x += upd
        h = nx.layernorm(x)
        _mm(h[:, img], blk.img_ff1, out=hid[:, img])
        _mm(h[:, txt], blk.txt_ff1, out=hid[:, txt])
        g = nx.gelu(hid)
        _mm(g[:, img], blk.img_ff2, out=upd[:, img])
        _mm(g[:, txt], blk.txt_ff2, out=upd[:, txt])
        x += upd

    out = nx.matmul(nx.layernorm(np.ascontiguousarray(x[:, : cfg.noise_tokens])), model.final)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite values in backbone output")
    return out


def initial_noise(cfg: ModelConfig, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed & (2**64 - 1), 0x5EED])
    return rng.standard_normal((1, cfg.noise_tokens, cfg.d_model)).astype(F32)


def sample(model: Model, source: LatentImage, prompt: str, sc: SampleConfig,
           hub: AttnHub | None = None, trajectory: list | None = None) -> np.ndarray:
    """Euler integration of the guided velocity from t=1 (noise) to t=0.

    Each step runs a conditional then an unconditional forward, mixes them
    with ``cfg_scale`` and advances the hub once. If ``trajectory`` is a list,
    the latent after every step is appended to it.
    """
    cfg = model.cfg
    cond = encode_text(prompt, cfg)
    uncond = encode_text(sc.negative_prompt, cfg)
    z = initial_noise(cfg, sc.seed)
    w = F32(sc.cfg_scale)
    dt = F32(1.0 / sc.steps)
    if hub is not None:
        hub.begin_run()
    try:
        for i in range(sc.steps):
            t = 1.0 - i / sc.steps
            v_c = forward(model, z, source, cond, i, hub, t)
            v_u = forward(model, z, source, uncond, i, hub, t)
            # (1-w)*u + w*c is exact at both w=0 and w=1
            v = (F32(1.0) - w) * v_u + w * v_c
            z = (z - dt * v).astype(F32)
            if hub is not None:
                hub.advance_step()
            if trajectory is not None:
                trajectory.append(z.copy())
    finally:
        if hub is not None:
            hub.end_run()
    return z
