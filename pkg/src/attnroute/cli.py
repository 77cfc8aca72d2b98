"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 run failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import Providers, emit_report, generate_suite, load_suite, read_report, save_suite
from .harness.runner import AXIS_ALIASES, RouterMode, run_variant, sweep
from .harness.suite import stratify
from .mmdit import ModelConfig, SampleConfig, build_model, encode_source, load_config
from .ops import KProbeOp, SpecError, parse_spec
from .pipeline import edit
from .router import Router


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _configs(path) -> tuple[ModelConfig, SampleConfig]:
    if path is None:
        return ModelConfig(), SampleConfig()
    return load_config(path)


def _fmt_from_path(path: str, fmt: str | None) -> str:
    if fmt:
        return fmt
    ext = Path(path).suffix.lower()
    return {".json": "json", ".txt": "text"}.get(ext, "csv")


def _meta(cfg: ModelConfig, sc: SampleConfig, providers: Providers, **extra) -> dict:
    meta = dict(extra)
    meta["model"] = " ".join(f"{k}={v}" for k, v in vars(cfg).items())
    meta["sampler"] = f"steps={sc.steps} cfg_scale={sc.cfg_scale}"
    meta["providers"] = providers.id
    return meta


def cmd_suite(args) -> int:
    if args.action != "gen":
        raise UsageError(f"unknown suite action {args.action!r}")
    cases = generate_suite(stratify(args.n), args.seed)
    save_suite(cases, args.out)
    return 0


def _parse_op(text: str):
    try:
        return parse_spec(text)
    except SpecError as e:
        raise UsageError(f"bad --op: {e}") from None


def cmd_run(args) -> int:
    spec = _parse_op(args.op)
    cfg, sc = _configs(args.model_cfg)
    model = build_model(cfg)
    providers = Providers.for_model(cfg)
    res = run_variant(args.name or args.op, spec, load_suite(args.suite), model, sc, providers)
    _write_or_fail([res], args, cfg, sc, providers)
    return 0 if res.complete else 2


def _write_or_fail(results, args, cfg, sc, providers, **extra) -> None:
    bad = [r for r in results if not r.complete]
    for r in bad:
        for cid, err in r.errors.items():
            print(f"{r.name}: case {cid} failed: {err}", file=sys.stderr)
    if bad:
        raise RuntimeError("some variants are incomplete; no report written")
    emit_report(results, _fmt_from_path(args.out, args.format), args.out,
                _meta(cfg, sc, providers, **extra), timing=args.timing)


def cmd_route(args) -> int:
    cfg, sc = _configs(args.model_cfg)
    model = build_model(cfg)
    providers = Providers.for_model(cfg)
    router = Router.default(table_path=args.table, anchors_path=args.anchors)
    res = run_variant(f"router:{args.mode}", RouterMode(args.mode, router),
                      load_suite(args.suite), model, sc, providers)
    _write_or_fail([res], args, cfg, sc, providers)
    return 0


def cmd_sweep(args) -> int:
    cfg, sc = _configs(args.model_cfg)
    model = build_model(cfg)
    providers = Providers.for_model(cfg)
    suite = load_suite(args.suite) if args.suite else generate_suite(stratify(100), 0)
    axis = AXIS_ALIASES.get(args.axis, args.axis)
    results = sweep(axis, None, suite, model, sc, workers=args.workers, providers=providers)
    _write_or_fail(results, args, cfg, sc, providers, axis=axis)
    return 0


def cmd_probe(args) -> int:
    spec = _parse_op(args.op)
    cfg, sc = _configs(args.model_cfg)
    model = build_model(cfg)
    suite = load_suite(args.suite) if args.suite else generate_suite(stratify(100), 0)
    matches = [c for c in suite if c.id == args.case]
    if not matches:
        raise UsageError(f"no case with id {args.case!r}")
    case = matches[0]
    source = encode_source(case.source_label, cfg, case.seed)
    probe = KProbeOp(cfg.source_start)
    run_sc = SampleConfig(sc.steps, sc.cfg_scale, case.seed, sc.negative_prompt)
    edit(model, source, case.instruction, spec, run_sc, extra_ops=[probe])
    probe.dump(args.out)
    return 0


def cmd_report(args) -> int:
    rows, meta = read_report(args.input)
    text = emit_report(rows, args.format, args.out, meta)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="attnroute", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("suite", help="generate a synthetic edit suite")
    s.add_argument("action", choices=["gen"])
    s.add_argument("--n", type=int, default=100, help="total cases, stratified over six categories")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_suite)

    def outputs(sp):
        sp.add_argument("--out", required=True)
        sp.add_argument("--format", choices=["csv", "json", "text"], default=None,
                        help="defaults to the --out extension (csv otherwise)")
        sp.add_argument("--timing", action="store_true",
                        help="fill seconds_per_case (makes reports run-dependent)")
        sp.add_argument("--model-cfg", default=None)

    r = sub.add_parser("run", help="run one op spec over a suite")
    r.add_argument("--op", required=True)
    r.add_argument("--suite", required=True)
    r.add_argument("--name", default=None)
    outputs(r)
    r.set_defaults(func=cmd_run)

    ro = sub.add_parser("route", help="run the router over a suite")
    ro.add_argument("--mode", choices=["oracle", "auto"], required=True)
    ro.add_argument("--table", default=None)
    ro.add_argument("--anchors", default=None)
    ro.add_argument("--suite", required=True)
    outputs(ro)
    ro.set_defaults(func=cmd_route)

    sw = sub.add_parser("sweep", help="run an ablation sweep")
    sw.add_argument("--axis", required=True,
                    choices=["alpha", "layers", "steps", "textscale", "kvscale", "main"])
    sw.add_argument("--suite", default=None, help="defaults to the 100-case suite with seed 0")
    sw.add_argument("--workers", type=int, default=1)
    outputs(sw)
    sw.set_defaults(func=cmd_sweep)

    pr = sub.add_parser("probe", help="dump noise/source K cosine per layer and step")
    pr.add_argument("--op", required=True)
    pr.add_argument("--case", required=True)
    pr.add_argument("--suite", default=None)
    pr.add_argument("--out", required=True)
    pr.add_argument("--model-cfg", default=None)
    pr.set_defaults(func=cmd_probe)

    rp = sub.add_parser("report", help="re-render a report file")
    rp.add_argument("--in", dest="input", required=True)
    rp.add_argument("--format", choices=["csv", "json", "text"], default="text")
    rp.add_argument("--out", default=None)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SpecError, FileNotFoundError) as e:
        print(f"attnroute: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"attnroute: run failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
