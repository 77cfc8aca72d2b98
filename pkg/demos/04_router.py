"""
Routing instructions to ops
===========================

A bag-of-words text embedder scores an instruction against per-category
anchor centroids; the winning category indexes a routing table of op specs.
Categories that share a spec make some misclassifications harmless.
"""
import numpy as np

from attnroute import ModelConfig, SampleConfig, build_model, encode_source
from attnroute.ops import format_spec
from attnroute.router import CATEGORIES, Router, routed_edit

router = Router.default()
for cat in CATEGORIES:
    print(f"{cat.value:11s} -> {format_spec(router.table[cat])}")

for text in ("Swap the cat for a dog", "Replace the cat with a dog",
             "make it a watercolor painting", "Remove the lamp", ""):
    cat = router.category(text)
    print(f"{text!r:36s} {cat.value:11s} {format_spec(router.spec_for(text))}")

# "Replace the cat with a dog" lands in BACKGROUND, which routes like REPLACE
model = build_model(ModelConfig())
sc = SampleConfig(seed=2)
source = encode_source("cat", model.cfg, seed=2)
text = "Replace the cat with a dog"
auto = routed_edit(source, text, router, model, sc)
oracle = routed_edit(source, text, router, model, sc, oracle_category=CATEGORIES[0])
print("auto == oracle output:", np.array_equal(auto, oracle))
