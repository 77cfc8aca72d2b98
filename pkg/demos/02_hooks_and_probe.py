"""
Hook accounting and the key probe
=================================

Every block dispatches six projections (image Q/K/V, text Q/K/V) through
the hub, twice per step for classifier-free guidance. A probe op placed
after KVInject records the cosine between noise-half and source-half keys.
"""
from attnroute import ModelConfig, SampleConfig, build_model, encode_source
from attnroute.ops import KProbeOp, parse_spec
from attnroute.pipeline import edit

model = build_model(ModelConfig())
sc = SampleConfig(steps=28, seed=1)
source = encode_source("red car", model.cfg, seed=1)
prompt = "make the car blue"

for text in ("baseline", "textscale:factor=3", "masactrl:layers=frac:0.50-0.75"):
    _, hub = edit(model, source, prompt, parse_spec(text), sc)
    print(f"{text:34s} dispatches={hub.total_firings} forwards={hub.forwards}")

# probe: keys seen after the op, averaged per layer
for text in ("baseline", "kvinject:alpha=0.7,layers=frac:0.50-0.75"):
    probe = KProbeOp(model.cfg.source_start)
    edit(model, source, prompt, parse_spec(text), sc, extra_ops=[probe])
    per_layer = {}
    for layer, step, value, _ in probe.rows():
        per_layer.setdefault(layer, []).append(value)
    means = " ".join(f"{sum(v) / len(v):+.2f}" for _, v in sorted(per_layer.items()))
    print(f"{text:42s} {means}")

# a per-dispatch trace can be written for inspection
_, hub = edit(model, source, prompt, parse_spec("kvinject:alpha=0.3,layers=6-9,steps=0-7"),
              sc, trace=True)
print("trace rows:", len(hub.records), "first fired:", next(r for r in hub.records if r[3]))
