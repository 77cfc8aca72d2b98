"""Per-category routing of edits to attention ops.

A :class:`RouteTable` maps each of the six edit categories to an op spec.
In auto mode the category comes from a nearest-centroid classifier over
anchor-sentence embeddings; in oracle mode it is supplied by the caller.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .mmdit import LatentImage, Model, SampleConfig
from .ops import OpSpec, parse_spec
from .pipeline import edit
from .text import BagOfWordsText


class EditCategory(enum.Enum):
    REPLACE = "replace"
    ADD = "add"
    REMOVE = "remove"
    ATTRIBUTE = "attribute"
    STYLE = "style"
    BACKGROUND = "background"

    @property
    def ordinal(self) -> int:
        return list(EditCategory).index(self)

    @classmethod
    def parse(cls, text: str) -> "EditCategory":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown edit category {text!r}") from None


CATEGORIES = tuple(EditCategory)

TextEmbedder = Callable[[str], np.ndarray]


# ---------------------------------------------------------------------------
# routing table


class RouteTable(dict):
    """Total mapping ``EditCategory -> OpSpec``."""

    def __init__(self, mapping):
        super().__init__(mapping)
        missing = [c.value for c in CATEGORIES if c not in self]
        if missing:
            raise ValueError(f"routing table is missing categories: {', '.join(missing)}")


def parse_route_table(text: str) -> RouteTable:
    """Parse ``category = <op spec>`` lines (``#`` starts a comment)."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cat, eq, spec = line.partition("=")
        if not eq:
            raise ValueError(f"line {lineno}: expected 'category = op', got {raw!r}")
        category = EditCategory.parse(cat)
        if category in mapping:
            raise ValueError(f"line {lineno}: duplicate category {category.value!r}")
        mapping[category] = parse_spec(spec)
    return RouteTable(mapping)


def load_route_table(path=None) -> RouteTable:
    """Load a routing table file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("attnroute.data").joinpath("routes.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_route_table(text)


def route(category: EditCategory, table: RouteTable) -> OpSpec:
    return table[category]


# ---------------------------------------------------------------------------
# anchors and classifier


def parse_anchors(text: str) -> dict[EditCategory, list[str]]:
    anchors: dict[EditCategory, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cat, bar, sentence = line.partition("|")
        if not bar or not sentence.strip():
            raise ValueError(f"line {lineno}: expected 'category | sentence', got {raw!r}")
        anchors.setdefault(EditCategory.parse(cat), []).append(sentence.strip())
    missing = [c.value for c in CATEGORIES if c not in anchors]
    if missing:
        raise ValueError(f"anchor set has no sentences for: {', '.join(missing)}")
    return anchors


def load_anchors(path=None) -> dict[EditCategory, list[str]]:
    if path is None:
        text = resources.files("attnroute.data").joinpath("anchors.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_anchors(text)


def build_centroids(anchors: dict[EditCategory, list[str]],
                    embed_text: TextEmbedder) -> dict[EditCategory, np.ndarray]:
    """Unit-normalised mean anchor embedding per category.

    Components are summed with ``math.fsum`` so the centroid does not depend
    on anchor order.
    """
    centroids = {}
    for cat in CATEGORIES:
        sentences = anchors.get(cat)
        if not sentences:
            raise ValueError(f"category {cat.value!r} has no anchors")
        embs = np.stack([np.asarray(embed_text(s), dtype=np.float64) for s in sentences])
        mean = np.array([math.fsum(col) for col in embs.T]) / len(sentences)
        norm = float(np.linalg.norm(mean))
        if norm == 0.0:
            raise ValueError(f"anchors for {cat.value!r} average to a zero vector")
        centroids[cat] = mean / norm
    return centroids


def classify(instruction: str, centroids: dict[EditCategory, np.ndarray],
             embed_text: TextEmbedder) -> EditCategory:
    """Argmax cosine over centroids; ties go to the lowest ordinal."""
    e = np.asarray(embed_text(instruction), dtype=np.float64)
    norm = float(np.linalg.norm(e))
    best, best_score = CATEGORIES[0], -math.inf
    for cat in CATEGORIES:
        score = float(np.dot(e, centroids[cat])) / norm if norm > 0 else 0.0
        if score > best_score:
            best, best_score = cat, score
    return best


@dataclass
class Router:
    """Bundles a routing table with a classifier for auto mode."""

    table: RouteTable
    centroids: dict
    embed_text: TextEmbedder

    @classmethod
    def default(cls, embed_text: TextEmbedder | None = None, table_path=None, anchors_path=None) -> "Router":
        embed_text = embed_text or BagOfWordsText()
        table = load_route_table(table_path)
        centroids = build_centroids(load_anchors(anchors_path), embed_text)
        return cls(table, centroids, embed_text)

    def category(self, instruction: str, oracle: EditCategory | None = None) -> EditCategory:
        return oracle if oracle is not None else classify(instruction, self.centroids, self.embed_text)

    def spec_for(self, instruction: str, oracle: EditCategory | None = None) -> OpSpec:
        return route(self.category(instruction, oracle), self.table)


def routed_edit(source: LatentImage, instruction: str, router: Router, model: Model,
                sc: SampleConfig, oracle_category: EditCategory | None = None) -> np.ndarray:
    """Classify (unless an oracle category is given), route, and sample."""
    spec = router.spec_for(instruction, oracle_category)
    z, _ = edit(model, source, instruction, spec, sc)
    return z
