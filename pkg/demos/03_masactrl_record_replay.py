"""
MasaCtrl: record, then replay
=============================

The classical two-pass recipe records image K/V during a pass with a
neutral prompt and replays them into the edit pass. Recording with the
edit prompt itself replays the run's own keys, so the result equals the
unhooked baseline bit for bit.
"""
import numpy as np

from attnroute import ModelConfig, SampleConfig, build_model, encode_source
from attnroute.ops import Baseline, BandSpec, MasaCtrl
from attnroute.pipeline import edit

model = build_model(ModelConfig())
sc = SampleConfig(seed=4)
source = encode_source("wooden chair", model.cfg, seed=4)
prompt = "make the chair metal"

base, _ = edit(model, source, prompt, Baseline(), sc)
same, hub = edit(model, source, prompt, MasaCtrl(neutral_prompt=prompt), sc)
print("self-replay equals baseline:", np.array_equal(base, same))
print("dispatches (record + inject):", hub.total_firings)

# with a neutral prompt the replayed keys carry different conditioning
band = BandSpec(layers=(0.5, 0.75), layers_frac=True)
neutral, _ = edit(model, source, prompt, MasaCtrl(band, neutral_prompt=""), sc)
print("neutral-prompt replay, |z - baseline|:", float(np.abs(neutral - base).max()))
