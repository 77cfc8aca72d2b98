"""Deterministic synthetic edit suite, stratified by category.

Per-case seeds come from a SplitMix64 stream started at the master seed:
``state += 0x9E3779B97F4A7C15`` then the usual xor-shift-multiply mix. The
same stream picks templates and fillers, so a master seed fixes the suite.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

from ..router import CATEGORIES, EditCategory

MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def choice(self, seq):
        return seq[self.next() % len(seq)]


@dataclass(frozen=True)
class EditCase:
    id: str
    category: EditCategory
    source_label: str
    instruction: str
    seed: int
    source_caption: str | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        d["category"] = self.category.value
        return d

    @classmethod
    def from_json(cls, d: dict) -> "EditCase":
        d = dict(d)
        d["category"] = EditCategory.parse(d["category"])
        return cls(**d)


OBJECTS = ("cat", "dog", "car", "chair", "tree", "lamp", "horse", "boat", "cup", "bicycle",
           "house", "bird", "vase", "clock", "apple", "guitar")
COLORS = ("red", "blue", "green", "yellow", "purple", "golden", "black", "white")
STYLES = ("watercolor", "oil", "anime", "pixel art", "cubist", "ukiyo-e", "pencil", "pop art")
PLACES = ("beach", "forest", "city street", "desert", "snowy mountain", "night sky", "library",
          "garden")

TEMPLATES = {
    EditCategory.REPLACE: (
        "Replace the {a} with a {b}", "Swap the {a} for a {b}",
        "Change the {a} into a {b}", "Turn the {a} into a {b}",
    ),
    EditCategory.ADD: (
        "Add a {b} next to the {a}", "Insert a {b} into the scene",
        "Put a {b} beside the {a}", "Place a small {b} in the picture",
    ),
    EditCategory.REMOVE: (
        "Remove the {a}", "Delete the {a} from the image",
        "Erase the {a}", "Get rid of the {a}",
    ),
    EditCategory.ATTRIBUTE: (
        "Make the {a} {color}", "Change the color of the {a} to {color}",
        "Paint the {a} {color}", "Make the {a} look older",
    ),
    EditCategory.STYLE: (
        "Make it a {style} painting", "Render the image in {style} style",
        "Turn the photo into a {style} artwork", "Convert the picture to {style} style",
    ),
    EditCategory.BACKGROUND: (
        "Change the background to a {place}", "Replace the background with a {place}",
        "Put the {a} in front of a {place}", "Set the scene in a {place}",
    ),
}

# categories that receive the remainder first when N is not divisible by 6;
# N=100 then yields 17/17/17/16/17/16 for replace/add/remove/attribute/style/background
_REMAINDER_ORDER = (EditCategory.REPLACE, EditCategory.ADD, EditCategory.REMOVE,
                    EditCategory.STYLE, EditCategory.ATTRIBUTE, EditCategory.BACKGROUND)


def stratify(n_total: int) -> dict[EditCategory, int]:
    if n_total < 0:
        raise ValueError("n_total must be non-negative")
    base, rem = divmod(n_total, len(CATEGORIES))
    counts = {c: base for c in CATEGORIES}
    for c in _REMAINDER_ORDER[:rem]:
        counts[c] += 1
    return counts


def benchmark_split() -> dict[EditCategory, int]:
    return stratify(100)


def generate_suite(n_per_category: int | Mapping[EditCategory, int] = 17,
                   master_seed: int = 0) -> list[EditCase]:
    if isinstance(n_per_category, int):
        if n_per_category <= 0:
            raise ValueError("n_per_category must be positive")
        counts = {c: n_per_category for c in CATEGORIES}
    else:
        counts = {c: int(n_per_category.get(c, 0)) for c in CATEGORIES}
    rng = SplitMix64(master_seed)
    cases = []
    for cat in CATEGORIES:
        for k in range(counts[cat]):
            seed = rng.next() >> 1  # keep seeds in the signed 64-bit range
            a = rng.choice(OBJECTS)
            b = rng.choice([o for o in OBJECTS if o != a])
            template = rng.choice(TEMPLATES[cat])
            instruction = template.format(
                a=a, b=b, color=rng.choice(COLORS), style=rng.choice(STYLES), place=rng.choice(PLACES)
            )
            cases.append(EditCase(
                id=f"{cat.value}-{k:03d}", category=cat, source_label=a,
                instruction=instruction, seed=seed, source_caption=f"a photo of a {a}",
            ))
    return cases


def save_suite(cases: list[EditCase], path) -> None:
    with open(path, "w") as fh:
        for c in cases:
            fh.write(json.dumps(c.to_json(), sort_keys=True) + "\n")


def load_suite(path) -> list[EditCase]:
    return [EditCase.from_json(json.loads(line))
            for line in Path(path).read_text().splitlines() if line.strip()]
