"""
A small ablation sweep
======================

Sweeps run a baseline plus one variant per grid point over the same cases,
with each case's seed shared across variants, and render a report table.
"""
import io

from attnroute import ModelConfig, SampleConfig, build_model
from attnroute.harness import emit_report, generate_suite, read_report, sweep

model = build_model(ModelConfig())
sc = SampleConfig(steps=28)
suite = generate_suite(2, master_seed=0)  # two cases per category
for case in suite[:3]:
    print(case.id, case.seed, repr(case.instruction))

results = sweep("alpha", [(0.3, (0.5, 0.75)), (0.7, (0.5, 0.75))], suite, model, sc)
print(emit_report(results, fmt="text"))

# every variant consumed the same (seed, source, prompt) triples
print("paired seeds:", all(r.consumed == results[0].consumed for r in results))

# csv round trip
buf = emit_report(results, fmt="csv", meta={"suite": "2 per category"})
with open("/tmp/attnroute_demo.csv", "w") as fh:
    fh.write(buf)
rows, meta = read_report("/tmp/attnroute_demo.csv")
print(len(rows), "rows;", meta)
