"""Run one edit: build hub ops for a spec and sample with them."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .hooks import AttnHub, AttnOp
from .mmdit import LatentImage, Model, SampleConfig, sample
from .ops import Compose, MasaCtrl, MasaCtrlOp, OpSpec, SpecError, build_ops


def _neutral_prompt(spec: OpSpec) -> str:
    specs = spec.ops if isinstance(spec, Compose) else (spec,)
    prompts = {s.neutral_prompt for s in specs if isinstance(s, MasaCtrl)}
    if len(prompts) > 1:
        raise SpecError(f"conflicting masactrl neutral prompts: {sorted(prompts)}")
    return prompts.pop()


def edit(model: Model, source: LatentImage, prompt: str, spec: OpSpec, sc: SampleConfig,
         extra_ops: Iterable[AttnOp] = (), trace: bool = False,
         trajectory: list | None = None) -> tuple[np.ndarray, AttnHub]:
    """Sample ``prompt`` on ``source`` with ``spec`` attached to a fresh hub.

    ``extra_ops`` are attached after the spec's ops (probes, checkers).
    MasaCtrl specs first run a record pass with the neutral prompt on the
    same seed and source; every op in the chain stays live during it, and
    the hub's firing log covers both passes.
    """
    cfg = model.cfg
    ops = build_ops(spec, cfg.num_layers, sc.steps, cfg.source_start)
    hub = AttnHub(list(ops) + list(extra_ops), trace=trace)
    hub.reset()
    masa = [op for op in ops if isinstance(op, MasaCtrlOp)]
    if masa:
        for op in masa:
            op.mode = "record"
        sample(model, source, _neutral_prompt(spec), sc, hub)
        for op in masa:
            op.mode = "inject"
    z = sample(model, source, prompt, sc, hub, trajectory=trajectory)
    return z, hub
