"""Edit-quality metrics over deterministic stand-in embedding spaces.

``ClipProvider`` puts images (a random projection of the latent tokens) and
text (hashed bag of words) into one space. ``DinoProvider`` is an image-only
projection with its own seed, so the two scores are not trivially coupled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import cosine
from ..text import BagOfWordsText, stable_hash


class RandomProjection:
    """Flatten a ``(1, tokens, d)`` latent and project it to ``dim``."""

    def __init__(self, tokens: int, d_model: int, dim: int, name: str, seed: int = 0):
        self.tokens, self.d_model, self.dim = tokens, d_model, dim
        rng = np.random.default_rng([seed, stable_hash(name, "provider")])
        self.weight = rng.standard_normal((tokens * d_model, dim)) / np.sqrt(tokens * d_model)
        self.id = f"randproj-{name}-{tokens}x{d_model}->{dim}-s{seed}"

    def __call__(self, latent: np.ndarray) -> np.ndarray:
        latent = np.asarray(latent, dtype=np.float64)
        if latent.shape[-2:] != (self.tokens, self.d_model):
            raise ValueError(
                f"{self.id} expects (…, {self.tokens}, {self.d_model}) tokens, got {latent.shape}"
            )
        return latent.reshape(-1) @ self.weight


class ClipProvider:
    def __init__(self, tokens: int, d_model: int, dim: int = 256, seed: int = 0):
        self.image = RandomProjection(tokens, d_model, dim, "clip", seed)
        self.text = BagOfWordsText(dim, "clip-text")
        self.id = f"clip[{self.image.id}|{self.text.id}]"


class DinoProvider:
    def __init__(self, tokens: int, d_model: int, dim: int = 256, seed: int = 0):
        self.image = RandomProjection(tokens, d_model, dim, "dino", seed)
        self.id = f"dino[{self.image.id}]"


@dataclass(frozen=True)
class Providers:
    clip: ClipProvider
    dino: DinoProvider

    @classmethod
    def for_model(cls, cfg, dim: int = 256, seed: int = 0) -> "Providers":
        return cls(ClipProvider(cfg.noise_tokens, cfg.d_model, dim, seed),
                   DinoProvider(cfg.noise_tokens, cfg.d_model, dim, seed))

    @property
    def id(self) -> str:
        return f"{self.clip.id}; {self.dino.id}"


@dataclass(frozen=True)
class MetricsReport:
    clip_t: float
    dino_i: float
    clip_d: float | None
    composite: float
    degenerate: bool = False


def composite(clip_t: float, dino_i: float) -> float:
    return 0.5 * clip_t + 0.5 * dino_i


def clip_t(edit: np.ndarray, instruction: str, provider: ClipProvider) -> tuple[float, bool]:
    """Cosine between the edited image and the instruction in CLIP space."""
    return cosine(provider.image(edit), provider.text(instruction))


def dino_i(edit: np.ndarray, source, provider: DinoProvider) -> tuple[float, bool]:
    """Cosine between the edited and source images in DINO space."""
    tokens = getattr(source, "tokens", source)
    return cosine(provider.image(edit), provider.image(tokens))


def clip_d(edit: np.ndarray, source, instruction: str, source_caption: str,
           provider: ClipProvider) -> tuple[float, bool]:
    """Directional similarity cos(image change, text change) in CLIP space."""
    tokens = getattr(source, "tokens", source)
    d_img = provider.image(edit) - provider.image(tokens)
    d_txt = provider.text(instruction) - provider.text(source_caption)
    return cosine(d_img, d_txt)


def evaluate(edit: np.ndarray, source, instruction: str, providers: Providers,
             source_caption: str | None = None) -> MetricsReport:
    ct, deg_t = clip_t(edit, instruction, providers.clip)
    di, deg_i = dino_i(edit, source, providers.dino)
    cd = None
    deg_d = False
    if source_caption is not None:
        cd, deg_d = clip_d(edit, source, instruction, source_caption, providers.clip)
    return MetricsReport(ct, di, cd, composite(ct, di), deg_t or deg_i or deg_d)


def mean_report(reports: list[MetricsReport]) -> MetricsReport:
    """Arithmetic means; the composite is recomputed from the mean scores."""
    if not reports:
        raise ValueError("no reports to average")
    ct = float(np.mean([r.clip_t for r in reports]))
    di = float(np.mean([r.dino_i for r in reports]))
    cds = [r.clip_d for r in reports]
    cd = None if any(c is None for c in cds) else float(np.mean(cds))
    return MetricsReport(ct, di, cd, composite(ct, di), any(r.degenerate for r in reports))
