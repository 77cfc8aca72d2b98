"""Variant runs and parameter sweeps over a paired-seed suite.

Every variant sees each case with the same ``(seed, source, prompt)``
triple: the case seed drives both the source encoder and the sampler.
Sweeps can fan out over processes; results are keyed by (variant, case)
and reassembled in order, so the worker count never changes the output.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Union

from ..mmdit import Model, ModelConfig, SampleConfig, build_model, encode_source
from ..ops import (
    Baseline, BandSpec, KVInject, MasaCtrl, OpSpec, SimpleKVScale, SpecError, TextScale,
    build_ops, format_spec, frac_to_layers,
)
from ..pipeline import edit
from ..router import EditCategory, Router
from .metrics import MetricsReport, Providers, evaluate, mean_report
from .suite import EditCase


@dataclass(frozen=True)
class RouterMode:
    mode: str  # "oracle" | "auto"
    router: Router = field(compare=False)

    def __post_init__(self):
        if self.mode not in ("oracle", "auto"):
            raise ValueError(f"router mode must be 'oracle' or 'auto', got {self.mode!r}")


Target = Union[OpSpec, RouterMode]


@dataclass
class CaseResult:
    case_id: str
    report: MetricsReport | None
    spec: str
    firings: int
    modified: int
    seconds: float
    consumed: tuple
    error: str | None = None


@dataclass
class VariantResult:
    name: str
    spec: str
    cases: list[CaseResult]
    mean: MetricsReport | None
    complete: bool

    @property
    def reports(self) -> list[MetricsReport]:
        return [c.report for c in self.cases]

    @property
    def firings_per_case(self) -> list[int]:
        return [c.firings for c in self.cases]

    @property
    def consumed(self) -> list[tuple]:
        return [c.consumed for c in self.cases]

    @property
    def errors(self) -> dict[str, str]:
        return {c.case_id: c.error for c in self.cases if c.error is not None}


def target_label(target: Target) -> str:
    if isinstance(target, RouterMode):
        return f"router:{target.mode}"
    return format_spec(target)


def run_case(model: Model, sc: SampleConfig, case: EditCase, target: Target,
             providers: Providers) -> CaseResult:
    consumed = (case.seed, case.source_label, case.instruction)
    t0 = time.perf_counter()
    try:
        if isinstance(target, RouterMode):
            oracle = case.category if target.mode == "oracle" else None
            spec = target.router.spec_for(case.instruction, oracle)
        else:
            spec = target
        run_sc = replace(sc, seed=case.seed)
        source = encode_source(case.source_label, model.cfg, case.seed)
        z, hub = edit(model, source, case.instruction, spec, run_sc)
        report = evaluate(z, source, case.instruction, providers, case.source_caption)
    except Exception as exc:  # recorded per case; the variant is then marked incomplete
        return CaseResult(case.id, None, target_label(target), 0, 0,
                          time.perf_counter() - t0, consumed, f"{type(exc).__name__}: {exc}")
    return CaseResult(case.id, report, format_spec(spec), hub.total_firings, hub.total_modified,
                      time.perf_counter() - t0, consumed)


def _aggregate(name: str, target: Target, cases: list[CaseResult]) -> VariantResult:
    complete = all(c.error is None for c in cases)
    mean = mean_report([c.report for c in cases]) if complete and cases else None
    return VariantResult(name, target_label(target), cases, mean, complete)


def run_variant(name: str, target: Target, suite: list[EditCase], model: Model,
                sc: SampleConfig, providers: Providers | None = None) -> VariantResult:
    check_target(name, target, model.cfg, sc.steps)
    providers = providers or Providers.for_model(model.cfg)
    cases = [run_case(model, sc, case, target, providers) for case in suite]
    return _aggregate(name, target, cases)


# ---------------------------------------------------------------------------
# process-pool plumbing

_WORKER_MODELS: dict[ModelConfig, tuple[Model, Providers]] = {}


def _worker_state(cfg: ModelConfig) -> tuple[Model, Providers]:
    if cfg not in _WORKER_MODELS:
        _WORKER_MODELS[cfg] = (build_model(cfg), Providers.for_model(cfg))
    return _WORKER_MODELS[cfg]


def _run_task(args):
    key, cfg, sc, case, target = args
    model, providers = _worker_state(cfg)
    return key, run_case(model, sc, case, target, providers)


def check_target(name: str, target: Target, cfg: ModelConfig, steps: int) -> None:
    """Resolve every band a target can use; raise SpecError before any sampling."""
    if isinstance(target, RouterMode):
        specs = [(f"{name} -> {cat.value}", spec) for cat, spec in target.router.table.items()]
    else:
        specs = [(name, target)]
    for label, spec in specs:
        try:
            build_ops(spec, cfg.num_layers, steps, cfg.source_start)
        except ValueError as e:
            raise SpecError(f"variant {label!r}: {e}") from None


def run_variants(variants: list[tuple[str, Target]], suite: list[EditCase], model: Model,
                 sc: SampleConfig, workers: int = 1,
                 providers: Providers | None = None) -> list[VariantResult]:
    """Run several variants over one suite, optionally in a process pool.

    Every variant's bands are checked against the model and step count first.
    """
    for name, target in variants:
        check_target(name, target, model.cfg, sc.steps)
    if workers <= 1:
        return [run_variant(name, target, suite, model, sc, providers) for name, target in variants]
    tasks = [((vi, ci), model.cfg, sc, case, target)
             for vi, (_, target) in enumerate(variants)
             for ci, case in enumerate(suite)]
    results = {}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for key, res in pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))):
            results[key] = res
    return [_aggregate(name, target, [results[(vi, ci)] for ci in range(len(suite))])
            for vi, (name, target) in enumerate(variants)]


# ---------------------------------------------------------------------------
# sweeps

AXES = ("alpha", "layer_band", "step_band", "text_scale", "kv_scale", "main")
AXIS_ALIASES = {"layers": "layer_band", "steps": "step_band", "textscale": "text_scale",
                "kvscale": "kv_scale"}

# depth fractions of the reference 60-block model's 15-layer bands
L0_15, L15_30, L30_45, L45_60 = (0.0, 0.25), (0.25, 0.50), (0.50, 0.75), (0.75, 1.0)
STEP_BANDS = ((0, 7), (7, 14), (14, 21), (21, 28), (0, 28))
KV_SCALE_SETTINGS = (("src", 0.0), ("src", 0.5), ("src", 2.0), ("noi", 0.5), ("noi", 2.0))


def default_grid(axis: str) -> list:
    axis = AXIS_ALIASES.get(axis, axis)
    if axis == "alpha":
        return [(a, band) for a in (0.3, 0.5, 0.7) for band in (L15_30, L30_45)]
    if axis == "layer_band":
        return [L0_15, L30_45, L45_60]
    if axis == "step_band":
        return list(STEP_BANDS)
    if axis == "text_scale":
        return [0.5, 1.5, 3.0]
    if axis == "kv_scale":
        return list(KV_SCALE_SETTINGS)
    if axis == "main":
        return ["kvscale", "textscale", "masactrl", "kvinject", "router:auto", "router:oracle"]
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")


def _layers_name(frac: tuple, num_layers: int) -> str:
    lo, hi = frac_to_layers(*frac, num_layers)
    return f"L{lo}-{hi}"


def grid_variants(axis: str, grid: list, num_layers: int, steps: int,
                  router: Router | None = None) -> list[tuple[str, Target]]:
    """Turn grid points into named targets, in table order."""
    axis = AXIS_ALIASES.get(axis, axis)
    out: list[tuple[str, Target]] = []
    for point in grid:
        if axis == "alpha":
            alpha, frac = point
            spec = KVInject(alpha, BandSpec(layers=tuple(frac), layers_frac=True))
            out.append((f"kvinject a={alpha:g} {_layers_name(frac, num_layers)}", spec))
        elif axis == "layer_band":
            spec = KVInject(0.3, BandSpec(layers=tuple(point), layers_frac=True))
            out.append((f"kvinject a=0.3 {_layers_name(point, num_layers)}", spec))
        elif axis == "step_band":
            lo, hi = point
            spec = KVInject(0.3, BandSpec(layers=L30_45, steps=(lo, hi), layers_frac=True))
            out.append((f"kvinject a=0.3 {_layers_name(L30_45, num_layers)} S{lo}-{hi}", spec))
        elif axis == "text_scale":
            out.append((f"textscale {point:g}", TextScale(float(point))))
        elif axis == "kv_scale":
            half, factor = point
            out.append((f"kvscale {half} x{factor:g}", SimpleKVScale(half, float(factor))))
        elif axis == "main":
            out.extend(_main_row(point, num_layers, router))
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
    return out


def _main_row(point: str, num_layers: int, router: Router | None) -> list[tuple[str, Target]]:
    band = BandSpec(layers=L30_45, layers_frac=True)
    if point == "kvscale":
        return [(f"kvscale {h} x{f:g}", SimpleKVScale(h, f)) for h, f in KV_SCALE_SETTINGS]
    if point == "textscale":
        return [("textscale 3", TextScale(3.0))]
    if point == "masactrl":
        return [(f"masactrl {_layers_name(L30_45, num_layers)}", MasaCtrl(band))]
    if point == "kvinject":
        return [(f"kvinject a=0.3 {_layers_name(L30_45, num_layers)}", KVInject(0.3, band))]
    if point.startswith("router:"):
        return [(point, RouterMode(point.split(":", 1)[1], router or Router.default()))]
    raise ValueError(f"unknown main-table row {point!r}")


def sweep(axis: str, grid: list | None, suite: list[EditCase], model: Model, sc: SampleConfig,
          workers: int = 1, router: Router | None = None,
          providers: Providers | None = None) -> list[VariantResult]:
    """Baseline plus one variant per grid point (``None`` = the default grid).

    For the ``main`` axis the five K/V-scale settings are all run and only
    the one with the best mean composite is kept, labelled ``(best)``.
    """
    axis = AXIS_ALIASES.get(axis, axis)
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")
    if grid is None:
        grid = default_grid(axis)
    if not grid:
        raise ValueError("sweep grid is empty")
    variants = [("baseline", Baseline())]
    variants += grid_variants(axis, grid, model.cfg.num_layers, sc.steps, router)
    results = run_variants(variants, suite, model, sc, workers, providers)
    if axis == "main":
        results = _keep_best_kvscale(results)
    return results


def _keep_best_kvscale(results: list[VariantResult]) -> list[VariantResult]:
    scale = [r for r in results if r.name.startswith("kvscale ")]
    if not scale:
        return results
    scored = [r for r in scale if r.mean is not None]
    best = max(scored, key=lambda r: r.mean.composite) if scored else scale[0]
    best.name = f"{best.name} (best)"
    return [r for r in results if r is best or not r.name.startswith("kvscale ")]
