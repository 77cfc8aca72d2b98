import numpy as np
import pytest

from attnroute import AttnHub, AttnOp, Band, ProjKind, ProjSite, SampleConfig, encode_source, sample
from attnroute.hooks import PROJ_ORDER, HubError, all_sites
from attnroute.mmdit import forward
from attnroute.ops import SHIPPED_OPS, MasaCtrlOp

ALL_KINDS = frozenset(ProjKind)
KV_KINDS = ALL_KINDS - {ProjKind.IMG_Q, ProjKind.TXT_Q}


class Scale(AttnOp):
    kinds = ALL_KINDS

    def __init__(self, factor, band=None):
        self.factor, self.band = factor, band
        self.name = f"scale{factor}"
        self.seen = []

    def __call__(self, site, step, x):
        self.seen.append((site, step))
        if self.band is not None and not self.band.contains(site.layer, step):
            return x
        return x * np.float32(self.factor)


class KVScale(Scale):
    kinds = KV_KINDS


class Recorder(AttnOp):
    kinds = ALL_KINDS

    def __init__(self):
        self.inputs = []

    def __call__(self, site, step, x):
        self.inputs.append(x.copy())
        return x


class Cropper(AttnOp):
    name = "cropper"
    kinds = ALL_KINDS

    def __call__(self, site, step, x):
        return x[:, :-1]


def running(*ops, trace=False):
    hub = AttnHub(ops, trace=trace)
    hub.begin_run()
    return hub


X = np.arange(24, dtype=np.float32).reshape(1, 4, 6)
SITE = ProjSite(2, ProjKind.IMG_K)


def test_empty_chain_returns_input():
    hub = running()
    assert hub.dispatch(SITE, X) is X
    assert hub.firing_log[SITE] == 1 and hub.modified_log[SITE] == 0


def test_identity_op_is_transparent():
    hub = running(AttnOp())
    assert hub.dispatch(SITE, X) is X


def test_chain_order_and_composition():
    rec = Recorder()
    hub = running(Scale(2.0), rec, Scale(0.5))
    out = hub.dispatch(SITE, X)
    np.testing.assert_allclose(out, X, rtol=1e-6)
    np.testing.assert_array_equal(rec.inputs[0], 2 * X)  # B sees A's output
    assert hub.modified_log[SITE] == 1


def test_band_gated_op_out_of_band():
    hub = running(Scale(3.0, Band(6, 9, 0, 28)))
    assert hub.dispatch(SITE, X) is X


def test_shape_change_is_rejected():
    hub = running(Cropper())
    with pytest.raises(HubError, match=r"cropper.*layer 2 img_k.*\(1, 4, 6\) -> \(1, 3, 6\)"):
        hub.dispatch(SITE, X)


def test_attach_mid_run_rejected():
    hub = running()
    with pytest.raises(HubError, match="in progress"):
        hub.attach(AttnOp())
    hub.end_run()
    hub.attach(AttnOp())


def test_dispatch_requires_run():
    with pytest.raises(HubError):
        AttnHub().dispatch(SITE, X)


def test_advance_step_and_gating():
    op = Scale(2.0, Band(0, 99, 0, 7))
    hub = running(op)
    in_band_steps = []
    for s in range(28):
        before = dict(hub.firing_log)
        y = hub.dispatch(SITE, X)
        if y is not X:
            in_band_steps.append(hub.current_step)
        snapshot = dict(hub.firing_log)
        hub.advance_step()
        assert dict(hub.firing_log) == snapshot  # advance_step leaves the log alone
        assert sum(snapshot.values()) == sum(before.values()) + 1
    assert hub.current_step == 28
    assert in_band_steps == list(range(7))


def test_reset_semantics():
    masa = MasaCtrlOp(Band(0, 4, 0, 4), source_start=2)
    hub = running(masa)
    masa.begin_forward(0, 0)
    hub.dispatch(ProjSite(0, ProjKind.IMG_K), X)
    assert masa.cache_size == 1 and hub.total_firings == 1
    hub.advance_step()
    hub.reset()
    assert hub.current_step == 0 and hub.total_firings == 0 and masa.cache_size == 0
    assert hub.ops == [masa]
    hub.reset()
    assert hub.current_step == 0 and hub.total_firings == 0
    fresh = AttnHub()
    hub2 = AttnHub()
    hub2.reset()
    for h in (fresh, hub2):
        h.begin_run()
        assert h.dispatch(SITE, X) is X


def test_no_shipped_op_targets_queries():
    for cls in SHIPPED_OPS:
        assert not any(k.is_query for k in cls.kinds), cls.__name__
        assert cls.kinds, cls.__name__


def test_total_firings_formula(small_model, small_sc):
    hub = AttnHub([KVScale(1.0)])
    src = encode_source("cat", small_model.cfg, 0)
    sample(small_model, src, "Erase the cat", small_sc, hub)
    L = small_model.cfg.num_layers
    assert hub.total_firings == 6 * L * 2 * small_sc.steps
    assert all(hub.firing_log[s] == 2 * small_sc.steps for s in all_sites(L))


def test_trace_dump(tmp_path, small_model, small_sc):
    hub = AttnHub([KVScale(2.0, Band(1, 2, 0, 1))], trace=True)
    src = encode_source("cat", small_model.cfg, 0)
    sample(small_model, src, "Erase the cat", small_sc, hub)
    path = tmp_path / "trace.txt"
    hub.dump_trace(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,layer,kind,fired"
    assert len(lines) - 1 == hub.total_firings
    fired = [l for l in lines[1:] if l.endswith(",1")]
    # 4 K/V kinds at layer 1, step 0, both CFG passes
    assert len(fired) == 8 and all(l.startswith("0,1,") for l in fired)
    with pytest.raises(HubError):
        AttnHub().dump_trace(path)


def test_empty_chain_sample_matches_hubless(small_model, small_sc):
    src = encode_source("cat", small_model.cfg, 0)
    assert (sample(small_model, src, "Erase the cat", small_sc, AttnHub()).tobytes()
            == sample(small_model, src, "Erase the cat", small_sc, None).tobytes())


def test_dispatch_order_within_block():
    assert PROJ_ORDER[0] is ProjKind.IMG_Q and len(set(PROJ_ORDER)) == 6


def test_band_validation():
    with pytest.raises(ValueError):
        Band(3, 2, 0, 1)
    with pytest.raises(ValueError):
        Band(0, 13, 0, 1).validate(12, 28)
    assert Band(0, 0, 0, 28).empty


def test_sites_sort_by_layer_then_dispatch_order():
    sites = all_sites(3)
    shuffled = sites[::-1]
    assert sorted(shuffled) == sites
    assert sorted(PROJ_ORDER[::-1]) == list(PROJ_ORDER)


@pytest.mark.parametrize("kind", [ProjKind.IMG_Q, ProjKind.TXT_Q])
def test_query_sites_are_observe_only(kind):
    site = ProjSite(0, kind)
    assert running(Recorder()).dispatch(site, X) is X
    with pytest.raises(HubError, match="observe-only"):
        running(Scale(2.0)).dispatch(site, X)
