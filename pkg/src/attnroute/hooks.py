"""Projection-level hook hub.

Every block of the backbone has six projections. Their outputs are routed
through :meth:`AttnHub.dispatch`, which folds the tensor through the ops
attached to the hub, in attachment order. Ops decide for themselves whether
a given ``(site, step)`` is in band; the hub only filters by projection kind
and keeps the books.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class ProjKind(enum.Enum):
    IMG_Q = "img_q"
    IMG_K = "img_k"
    IMG_V = "img_v"
    TXT_Q = "txt_q"
    TXT_K = "txt_k"
    TXT_V = "txt_v"

    # members are singletons; identity hashing avoids Enum's Python-level __hash__
    __hash__ = object.__hash__

    @property
    def is_query(self) -> bool:
        return self in QUERY_KINDS

    def __lt__(self, other: "ProjKind") -> bool:
        if not isinstance(other, ProjKind):
            return NotImplemented
        return PROJ_ORDER.index(self) < PROJ_ORDER.index(other)


# dispatch order inside one block
PROJ_ORDER = (
    ProjKind.IMG_Q, ProjKind.IMG_K, ProjKind.IMG_V,
    ProjKind.TXT_Q, ProjKind.TXT_K, ProjKind.TXT_V,
)
IMAGE_KV = frozenset({ProjKind.IMG_K, ProjKind.IMG_V})
TEXT_KV = frozenset({ProjKind.TXT_K, ProjKind.TXT_V})
QUERY_KINDS = frozenset({ProjKind.IMG_Q, ProjKind.TXT_Q})


@dataclass(frozen=True, order=True)
class ProjSite:
    layer: int
    kind: ProjKind

    def __post_init__(self):
        if self.layer < 0:
            raise ValueError(f"layer must be non-negative, got {self.layer}")
        if not isinstance(self.kind, ProjKind):
            raise ValueError(f"invalid projection kind {self.kind!r}")
        object.__setattr__(self, "_hash", hash((self.layer, self.kind)))

    def __hash__(self) -> int:
        return self._hash


def all_sites(num_layers: int) -> list[ProjSite]:
    return [ProjSite(l, k) for l in range(num_layers) for k in PROJ_ORDER]


@dataclass(frozen=True)
class Band:
    """Half-open layer interval times half-open step interval."""

    layer_lo: int
    layer_hi: int
    step_lo: int
    step_hi: int

    def __post_init__(self):
        if not (0 <= self.layer_lo <= self.layer_hi):
            raise ValueError(f"bad layer interval [{self.layer_lo}, {self.layer_hi})")
        if not (0 <= self.step_lo <= self.step_hi):
            raise ValueError(f"bad step interval [{self.step_lo}, {self.step_hi})")

    @classmethod
    def full(cls, num_layers: int, steps: int) -> "Band":
        return cls(0, num_layers, 0, steps)

    def contains(self, layer: int, step: int) -> bool:
        return self.layer_lo <= layer < self.layer_hi and self.step_lo <= step < self.step_hi

    @property
    def empty(self) -> bool:
        return self.layer_lo == self.layer_hi or self.step_lo == self.step_hi

    def validate(self, num_layers: int, steps: int) -> "Band":
        if self.layer_hi > num_layers:
            raise ValueError(f"layer band [{self.layer_lo}, {self.layer_hi}) exceeds {num_layers} layers")
        if self.step_hi > steps:
            raise ValueError(f"step band [{self.step_lo}, {self.step_hi}) exceeds {steps} steps")
        return self


class AttnOp:
    """Base class for hub ops.

    Subclasses set ``kinds`` (the projection kinds they want to see) and
    override ``__call__``. Returning the input object itself means "not
    modified"; any other array counts as a modification in the hub's log.
    The input may be a view into a buffer the backbone reuses, so an op that
    keeps a tensor past the call must copy it, and must never write into it.
    """

    name = "identity"
    kinds: frozenset = frozenset()

    def __call__(self, site: ProjSite, step: int, x: np.ndarray) -> np.ndarray:
        return x

    def reset(self) -> None:
        """Clear per-run caches."""

    def begin_forward(self, step: int, pass_index: int) -> None:
        """Called before every backbone forward."""


class HubError(RuntimeError):
    pass


class AttnHub:
    """Registry and dispatcher for projection hooks.

    ``firing_log`` counts every dispatch per site; ``modified_log`` counts the
    dispatches at which some op returned a new tensor. With ``trace=True``
    a per-dispatch record ``(step, layer, kind, fired)`` is also kept.
    """

    def __init__(self, ops: Iterable[AttnOp] = (), trace: bool = False):
        self.ops: list[AttnOp] = []
        self.trace = trace
        self.current_step = 0
        self.pass_index = -1
        self.forwards = 0
        self.firing_log: Counter = Counter()
        self.modified_log: Counter = Counter()
        self.records: list[tuple[int, int, str, int]] = []
        self._in_run = False
        self._by_kind: dict[ProjKind, list[AttnOp]] = {k: [] for k in ProjKind}
        for op in ops:
            self.attach(op)

    # lifecycle -----------------------------------------------------------
    @property
    def in_run(self) -> bool:
        return self._in_run

    def attach(self, op: AttnOp) -> None:
        if self._in_run:
            raise HubError(f"cannot attach {op.name!r} while a run is in progress")
        self.ops.append(op)
        for kind in op.kinds:
            self._by_kind[kind].append(op)

    def reset(self) -> None:
        self.current_step = 0
        self.pass_index = -1
        self.forwards = 0
        self.firing_log.clear()
        self.modified_log.clear()
        self.records.clear()
        self._in_run = False
        for op in self.ops:
            op.reset()

    def begin_run(self) -> None:
        if self._in_run:
            raise HubError("run already in progress")
        self._in_run = True
        self.current_step = 0
        self.pass_index = -1

    def end_run(self) -> None:
        self._in_run = False

    def begin_forward(self) -> None:
        if not self._in_run:
            raise HubError("begin_forward outside a run")
        self.pass_index += 1
        self.forwards += 1
        for op in self.ops:
            op.begin_forward(self.current_step, self.pass_index)

    def advance_step(self) -> None:
        if not self._in_run:
            raise HubError("advance_step outside a run")
        self.current_step += 1
        self.pass_index = -1

    # dispatch ------------------------------------------------------------
    def dispatch(self, site: ProjSite, x: np.ndarray) -> np.ndarray:
        if not self._in_run:
            raise HubError("dispatch outside a run; call begin_run() first")
        step = self.current_step
        out = x
        for op in self._by_kind[site.kind]:
            y = op(site, step, out)
            if y.shape != out.shape:
                raise HubError(
                    f"op {op.name!r} changed shape at layer {site.layer} {site.kind.value}, "
                    f"step {step}: {out.shape} -> {y.shape}"
                )
            out = y
        self.firing_log[site] += 1
        fired = out is not x
        if fired:
            if site.kind in QUERY_KINDS:
                raise HubError(f"query projections are observe-only; an op modified "
                               f"layer {site.layer} {site.kind.value} at step {step}")
            self.modified_log[site] += 1
        if self.trace:
            self.records.append((step, site.layer, site.kind.value, int(fired)))
        return out

    @property
    def total_firings(self) -> int:
        return sum(self.firing_log.values())

    @property
    def total_modified(self) -> int:
        return sum(self.modified_log.values())

    def dump_trace(self, path) -> None:
        """Write ``step,layer,kind,fired`` rows (requires ``trace=True``)."""
        if not self.trace:
            raise HubError("tracing is disabled on this hub")
        with open(path, "w") as fh:
            fh.write("step,layer,kind,fired\n")
            for step, layer, kind, fired in self.records:
                fh.write(f"{step},{layer},{kind},{fired}\n")
