"""Training-free attention ops and their textual specs.

Op specs are small frozen dataclasses. ``parse_spec``/``format_spec`` map
them to and from the one-line form used in routing tables and on the
command line, e.g. ``kvinject:alpha=0.3,layers=frac:0.50-0.75,steps=0-7``.
Bands given as depth fractions stay symbolic until :func:`build_ops`
resolves them against a model and sampler.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .hooks import IMAGE_KV, TEXT_KV, AttnOp, Band, ProjKind, ProjSite
from .numerics import cosine


class SpecError(ValueError):
    pass


# ---------------------------------------------------------------------------
# bands


def frac_to_layers(lo: float, hi: float, num_layers: int) -> tuple[int, int]:
    """Map a depth-fraction interval to layer indices (floor lo, ceil hi).

    >>> frac_to_layers(0.50, 0.75, 12)
    (6, 9)
    >>> frac_to_layers(0.50, 0.75, 60)
    (30, 45)
    """
    # round first so 0.29*100 style noise cannot push floor/ceil over an integer
    a = round(lo * num_layers, 9)
    b = round(hi * num_layers, 9)
    return int(math.floor(a)), int(math.ceil(b))


@dataclass(frozen=True)
class BandSpec:
    """Unresolved band: ``None`` means the full range."""

    layers: tuple | None = None
    steps: tuple | None = None
    layers_frac: bool = False

    def resolve(self, num_layers: int, steps: int) -> Band:
        if self.layers is None:
            l_lo, l_hi = 0, num_layers
        elif self.layers_frac:
            l_lo, l_hi = frac_to_layers(*self.layers, num_layers)
        else:
            l_lo, l_hi = self.layers
        s_lo, s_hi = (0, steps) if self.steps is None else self.steps
        return Band(l_lo, l_hi, s_lo, s_hi).validate(num_layers, steps)


FULL = BandSpec()


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class Baseline:
    pass


@dataclass(frozen=True)
class KVInject:
    alpha: float
    band: BandSpec = FULL

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise SpecError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class SimpleKVScale:
    half: str  # "src" | "noi"
    factor: float
    band: BandSpec = FULL

    def __post_init__(self):
        if self.half not in ("src", "noi"):
            raise SpecError(f"half must be 'src' or 'noi', got {self.half!r}")
        if self.factor < 0:
            raise SpecError(f"factor must be non-negative, got {self.factor}")


@dataclass(frozen=True)
class TextScale:
    factor: float
    band: BandSpec = FULL

    def __post_init__(self):
        if self.factor < 0:
            raise SpecError(f"factor must be non-negative, got {self.factor}")


@dataclass(frozen=True)
class MasaCtrl:
    band: BandSpec = FULL
    neutral_prompt: str = ""
    full_stream: bool = False


@dataclass(frozen=True)
class Compose:
    ops: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.ops:
            raise SpecError("compose() needs at least one op")
        for op in self.ops:
            if isinstance(op, Compose):
                raise SpecError("compose() cannot be nested")


OpSpec = Union[Baseline, KVInject, SimpleKVScale, TextScale, MasaCtrl, Compose]


def uses_masactrl(spec: OpSpec) -> bool:
    if isinstance(spec, Compose):
        return any(isinstance(s, MasaCtrl) for s in spec.ops)
    return isinstance(spec, MasaCtrl)


# ---------------------------------------------------------------------------
# text form


def _split_top(text: str, sep: str) -> list[str]:
    """Split on ``sep`` outside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def _parse_interval(key: str, value: str, token: str) -> tuple:
    frac = value.startswith("frac:")
    body = value[5:] if frac else value
    lo, sep, hi = body.partition("-")
    if not sep:
        raise SpecError(f"bad interval in {token!r}: expected <lo>-<hi>")
    try:
        if frac:
            a, b = float(lo), float(hi)
            if not (0.0 <= a <= b <= 1.0):
                raise SpecError(f"bad depth fraction in {token!r}")
        else:
            a, b = int(lo), int(hi)
            if not (0 <= a <= b):
                raise SpecError(f"bad interval in {token!r}: need 0 <= lo <= hi")
    except ValueError as e:
        if isinstance(e, SpecError):
            raise
        raise SpecError(f"bad number in {token!r}") from None
    if frac and key != "layers":
        raise SpecError(f"depth fractions are only allowed for layers, got {token!r}")
    return (a, b), frac


def _parse_float(value: str, token: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise SpecError(f"bad number in {token!r}") from None
    if not math.isfinite(x):
        raise SpecError(f"non-finite number in {token!r}")
    return x


_ALLOWED = {
    "kvinject": {"alpha", "layers", "steps"},
    "kvscale": {"half", "factor", "layers", "steps"},
    "textscale": {"factor", "layers", "steps"},
    "masactrl": {"layers", "steps", "neutral", "full"},
}
_REQUIRED = {
    "kvinject": {"alpha"},
    "kvscale": {"half", "factor"},
    "textscale": {"factor"},
    "masactrl": set(),
}


def parse_spec(text: str, _nested: bool = False) -> OpSpec:
    """Parse the one-line op form. Errors name the offending token."""
    text = text.strip()
    if text == "baseline":
        return Baseline()
    if text.startswith("compose(") and text.endswith(")"):
        if _nested:
            raise SpecError(f"nested compose in {text!r}")
        inner = text[len("compose("):-1]
        parts = [p for p in _split_top(inner, ";")]
        if any(not p.strip() for p in parts):
            raise SpecError(f"empty element in {text!r}")
        return Compose(tuple(parse_spec(p, _nested=True) for p in parts))
    kind, sep, rest = text.partition(":")
    if kind not in _ALLOWED:
        raise SpecError(f"unknown op {kind!r}")
    kv: dict[str, str] = {}
    if sep and rest:
        # neutral=<text> may contain commas; it must therefore come last
        tokens = rest.split(",")
        i = 0
        while i < len(tokens):
            tok = tokens[i]
            key, eq, value = tok.partition("=")
            key = key.strip()
            if not eq:
                raise SpecError(f"expected key=value, got {tok!r}")
            if key == "neutral":
                value = ",".join([value] + tokens[i + 1:])
                i = len(tokens)
            else:
                i += 1
            if key not in _ALLOWED[kind]:
                raise SpecError(f"unknown key {key!r} for {kind} in {tok!r}")
            if key in kv:
                raise SpecError(f"duplicate key in {tok!r}")
            kv[key] = value.strip() if key != "neutral" else value
    missing = _REQUIRED[kind] - kv.keys()
    if missing:
        raise SpecError(f"{kind} is missing {', '.join(sorted(missing))}")

    layers = steps = None
    layers_frac = False
    if "layers" in kv:
        layers, layers_frac = _parse_interval("layers", kv["layers"], f"layers={kv['layers']}")
    if "steps" in kv:
        steps, _ = _parse_interval("steps", kv["steps"], f"steps={kv['steps']}")
    band = BandSpec(layers, steps, layers_frac)

    if kind == "kvinject":
        return KVInject(_parse_float(kv["alpha"], f"alpha={kv['alpha']}"), band)
    if kind == "kvscale":
        return SimpleKVScale(kv["half"], _parse_float(kv["factor"], f"factor={kv['factor']}"), band)
    if kind == "textscale":
        return TextScale(_parse_float(kv["factor"], f"factor={kv['factor']}"), band)
    full = kv.get("full", "0")
    if full not in ("0", "1"):
        raise SpecError(f"full must be 0 or 1, got {'full=' + full!r}")
    return MasaCtrl(band, kv.get("neutral", ""), full == "1")


def _num(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else f"{x:.1f}"


def _band_text(b: BandSpec) -> list[str]:
    out = []
    if b.layers is not None:
        if b.layers_frac:
            out.append(f"layers=frac:{b.layers[0]:.2f}-{b.layers[1]:.2f}")
        else:
            out.append(f"layers={b.layers[0]}-{b.layers[1]}")
    if b.steps is not None:
        out.append(f"steps={b.steps[0]}-{b.steps[1]}")
    return out


def format_spec(spec: OpSpec) -> str:
    """Canonical text form; ``parse_spec(format_spec(s)) == s``."""
    if isinstance(spec, Baseline):
        return "baseline"
    if isinstance(spec, Compose):
        return "compose(" + ";".join(format_spec(s) for s in spec.ops) + ")"
    if isinstance(spec, KVInject):
        parts = [f"alpha={_num(spec.alpha)}"] + _band_text(spec.band)
        return "kvinject:" + ",".join(parts)
    if isinstance(spec, SimpleKVScale):
        parts = [f"half={spec.half}", f"factor={_num(spec.factor)}"] + _band_text(spec.band)
        return "kvscale:" + ",".join(parts)
    if isinstance(spec, TextScale):
        return "textscale:" + ",".join([f"factor={_num(spec.factor)}"] + _band_text(spec.band))
    if isinstance(spec, MasaCtrl):
        parts = _band_text(spec.band)
        if spec.full_stream:
            parts.append("full=1")
        parts.append(f"neutral={spec.neutral_prompt}")
        return "masactrl:" + ",".join(parts)
    raise TypeError(f"not an op spec: {spec!r}")


# ---------------------------------------------------------------------------
# kernels


def _check_halves(x: np.ndarray, source_start: int) -> None:
    if x.shape[1] < 2 * source_start:
        raise ValueError(
            f"token dim {x.shape[1]} is smaller than 2*source_start={2 * source_start}"
        )


def kv_inject(site: ProjSite, step: int, x: np.ndarray, alpha: float, band: Band,
              source_start: int) -> np.ndarray:
    """Blend the source-half K/V into the noise-half, in band only.

    ``noise' = alpha * src + (1 - alpha) * noise``; the source half and any
    trailing tokens are left untouched.
    """
    if site.kind not in IMAGE_KV:
        return x
    _check_halves(x, source_start)
    if not band.contains(site.layer, step):
        return x
    a = np.float32(alpha)
    n = source_start
    out = x.astype(np.float32, copy=True)
    noise = out[:, :n]
    noise *= np.float32(1.0) - a
    noise += a * x[:, n:2 * n]
    return out


def simple_kv_scale(site: ProjSite, step: int, x: np.ndarray, half: str, factor: float,
                    band: Band, source_start: int) -> np.ndarray:
    """Multiply one half of the image K/V by ``factor``, in band only."""
    if site.kind not in IMAGE_KV:
        return x
    _check_halves(x, source_start)
    if not band.contains(site.layer, step):
        return x
    n = source_start
    out = x.astype(np.float32, copy=True)
    sl = slice(n, 2 * n) if half == "src" else slice(0, n)
    out[:, sl] *= np.float32(factor)
    return out


def text_scale(site: ProjSite, step: int, x: np.ndarray, factor: float, band: Band) -> np.ndarray:
    if site.kind not in TEXT_KV or not band.contains(site.layer, step):
        return x
    return (x * np.float32(factor)).astype(np.float32, copy=False)


# ---------------------------------------------------------------------------
# hub ops


class KVInjectOp(AttnOp):
    name = "kvinject"
    kinds = IMAGE_KV

    def __init__(self, alpha: float, band: Band, source_start: int):
        if not 0.0 <= alpha <= 1.0:
            raise SpecError(f"alpha must lie in [0, 1], got {alpha}")
        self.alpha, self.band, self.source_start = alpha, band, source_start

    def __call__(self, site, step, x):
        return kv_inject(site, step, x, self.alpha, self.band, self.source_start)


class SimpleKVScaleOp(AttnOp):
    name = "kvscale"
    kinds = IMAGE_KV

    def __init__(self, half: str, factor: float, band: Band, source_start: int):
        self.half, self.factor, self.band, self.source_start = half, factor, band, source_start

    def __call__(self, site, step, x):
        return simple_kv_scale(site, step, x, self.half, self.factor, self.band, self.source_start)


class TextScaleOp(AttnOp):
    name = "textscale"
    kinds = TEXT_KV

    def __init__(self, factor: float, band: Band):
        self.factor, self.band = factor, band

    def __call__(self, site, step, x):
        return text_scale(site, step, x, self.factor, self.band)


class MasaCtrlError(RuntimeError):
    pass


class MasaCtrlOp(AttnOp):
    """Two-pass record/replay of image K/V.

    In ``"record"`` mode in-band K/V outputs are copied into the cache,
    keyed by ``(site, step)`` with one slot per CFG pass. In ``"inject"``
    mode the noise half (or, with ``full_stream``, the whole image stream)
    of each in-band K/V is replaced by the cached tensor.
    """

    name = "masactrl"
    kinds = IMAGE_KV

    def __init__(self, band: Band, source_start: int, full_stream: bool = False):
        self.band = band
        self.source_start = source_start
        self.full_stream = full_stream
        self.mode = "record"
        self.cache: dict[tuple[ProjSite, int], dict[int, np.ndarray]] = {}
        self._pass = 0

    def reset(self):
        self.cache.clear()
        self.mode = "record"

    def begin_forward(self, step, pass_index):
        self._pass = pass_index

    @property
    def cache_size(self) -> int:
        return len(self.cache)

    def __call__(self, site, step, x):
        if self.mode == "record":
            return self.record(site, step, x)
        return self.inject(site, step, x)

    def record(self, site, step, x):
        if not self.band.contains(site.layer, step):
            return x
        slots = self.cache.setdefault((site, step), {})
        if self._pass in slots:
            raise MasaCtrlError(
                f"duplicate record for layer {site.layer} {site.kind.value} step {step} "
                f"pass {self._pass}; reset the hub between record runs"
            )
        slots[self._pass] = np.array(x, copy=True)
        return x

    def inject(self, site, step, x):
        if not self.band.contains(site.layer, step):
            return x
        _check_halves(x, self.source_start)
        try:
            cached = self.cache[(site, step)][self._pass]
        except KeyError:
            raise MasaCtrlError(
                f"no cached K/V for layer {site.layer} {site.kind.value} step {step} pass {self._pass}"
            ) from None
        if cached.shape != x.shape:
            raise MasaCtrlError(f"cached shape {cached.shape} != {x.shape}")
        if self.full_stream:
            return np.array(cached, copy=True)
        n = self.source_start
        out = np.array(x, dtype=np.float32, copy=True)
        out[:, :n] = cached[:, :n]
        return out


class KProbeOp(AttnOp):
    """Records cos(noise-half K, source-half K) at every image-K site.

    Attach it after the op under study to observe post-op keys.
    """

    name = "kprobe"
    kinds = frozenset({ProjKind.IMG_K})

    def __init__(self, source_start: int):
        self.source_start = source_start
        self.log: dict[tuple[int, int], list[tuple[float, bool]]] = {}

    def reset(self):
        self.log.clear()

    def __call__(self, site, step, x):
        k_probe(site, step, x, self.log, self.source_start)
        return x

    def rows(self) -> list[tuple[int, int, float, bool]]:
        return [(layer, step, v, deg)
                for (layer, step), vals in sorted(self.log.items())
                for v, deg in vals]

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("layer,step,cos_sim,degenerate\n")
            for layer, step, v, deg in self.rows():
                fh.write(f"{layer},{step},{v:.6f},{int(deg)}\n")


def k_probe(site: ProjSite, step: int, x: np.ndarray, probe_log: dict, source_start: int) -> np.ndarray:
    if site.kind is not ProjKind.IMG_K:
        raise ValueError(f"k_probe expects an image-K site, got {site.kind.value}")
    _check_halves(x, source_start)
    n = source_start
    value, degenerate = cosine(x[:, :n], x[:, n:2 * n])
    probe_log.setdefault((site.layer, step), []).append((value, degenerate))
    return x


# every op class shipped by this module, for audits
SHIPPED_OPS = (KVInjectOp, SimpleKVScaleOp, TextScaleOp, MasaCtrlOp, KProbeOp)


def build_ops(spec: OpSpec, num_layers: int, steps: int, source_start: int) -> list[AttnOp]:
    """Instantiate hub ops for ``spec`` with bands resolved to indices."""
    if isinstance(spec, Baseline):
        return []
    if isinstance(spec, Compose):
        return [op for s in spec.ops for op in build_ops(s, num_layers, steps, source_start)]
    band = spec.band.resolve(num_layers, steps)
    if isinstance(spec, KVInject):
        return [KVInjectOp(spec.alpha, band, source_start)]
    if isinstance(spec, SimpleKVScale):
        return [SimpleKVScaleOp(spec.half, spec.factor, band, source_start)]
    if isinstance(spec, TextScale):
        return [TextScaleOp(spec.factor, band)]
    if isinstance(spec, MasaCtrl):
        return [MasaCtrlOp(band, source_start, spec.full_stream)]
    raise TypeError(f"not an op spec: {spec!r}")
