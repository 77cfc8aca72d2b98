"""
KV injection and band gating
============================

KVInject pulls the noise-half image keys/values toward the source half:
``noise' = alpha * src + (1 - alpha) * noise``. It only acts inside its
band of layers and sampling steps.
"""
import numpy as np

from attnroute import Band, ModelConfig, ProjKind, ProjSite, SampleConfig, build_model, encode_source
from attnroute.ops import kv_inject, parse_spec
from attnroute.pipeline import edit

# a hand-sized key tensor: two noise tokens, then two source tokens
x = np.array([[[1, 2], [3, 4], [5, 6], [7, 8]]], dtype=np.float32)
site = ProjSite(0, ProjKind.IMG_K)
band = Band(0, 1, 0, 1)
print("alpha=0.5 noise half:\n", kv_inject(site, 0, x, 0.5, band, 2)[0, :2])

# the distance to the source shrinks by exactly (1 - alpha)
for alpha in (0.0, 0.3, 0.7, 1.0):
    out = kv_inject(site, 0, x, alpha, band, 2)
    before = np.linalg.norm(x[:, :2] - x[:, 2:])
    after = np.linalg.norm(out[:, :2] - x[:, 2:])
    print(f"alpha={alpha:.1f}  |K-K_src| {before:.4f} -> {after:.4f}")

# outside the band (or on a query projection) the tensor is passed through untouched
print("out of band is identity:", kv_inject(site, 5, x, 0.5, band, 2) is x)

# on the full model: layers 6-8, steps 0-6 only
model = build_model(ModelConfig())
source = encode_source("cat", model.cfg, seed=0)
spec = parse_spec("kvinject:alpha=0.3,layers=6-9,steps=0-7")
z, hub = edit(model, source, "turn the cat into a dog", spec, SampleConfig(seed=0))
print("dispatches:", hub.total_firings, " modified:", hub.total_modified)
for s, n in sorted(hub.modified_log.items()):
    print(f"  layer {s.layer:2d} {s.kind.value}: {n} modified forwards")
