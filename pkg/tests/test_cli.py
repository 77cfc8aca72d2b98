import json

import pytest

from attnroute.cli import main
from attnroute.harness import load_suite, read_report

SMALL = "num_layers=4\nd_model=16\nheads=2\nnoise_tokens=4\nsource_tokens=4\ntext_tokens=4\nsteps=2\n"


@pytest.fixture
def work(tmp_path):
    (tmp_path / "model.cfg").write_text(SMALL)
    assert main(["suite", "gen", "--n", "6", "--seed", "1", "--out", str(tmp_path / "suite.jsonl")]) == 0
    return tmp_path


def test_suite_gen(work):
    cases = load_suite(work / "suite.jsonl")
    assert len(cases) == 6 and len({c.category for c in cases}) == 6


def test_run_and_report(work, capsys):
    out = work / "run.csv"
    rc = main(["run", "--op", "kvinject:alpha=0.3,layers=1-3", "--suite", str(work / "suite.jsonl"),
               "--model-cfg", str(work / "model.cfg"), "--out", str(out)])
    assert rc == 0
    rows, meta = read_report(out)
    assert len(rows) == 1 and rows[0].firings == str(6 * 4 * 2 * 2)
    assert "num_layers=4" in meta["model"]
    assert main(["report", "--in", str(out), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["rows"][0][0] == "kvinject:alpha=0.3,layers=1-3"


def test_route(work):
    for mode in ("oracle", "auto"):
        out = work / f"{mode}.json"
        assert main(["route", "--mode", mode, "--suite", str(work / "suite.jsonl"),
                     "--model-cfg", str(work / "model.cfg"), "--out", str(out)]) == 0
        rows, _ = read_report(out)
        assert rows[0].variant == f"router:{mode}"


def test_sweep_workers_byte_identical(work):
    paths = []
    for w in ("1", "2"):
        p = work / f"sweep{w}.csv"
        assert main(["sweep", "--axis", "textscale", "--suite", str(work / "suite.jsonl"),
                     "--model-cfg", str(work / "model.cfg"), "--workers", w, "--out", str(p)]) == 0
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    rows, meta = read_report(paths[0])
    assert [r.variant for r in rows] == ["baseline", "textscale 0.5", "textscale 1.5", "textscale 3"]
    assert meta["axis"] == "text_scale"


def test_probe(work):
    out = work / "probe.csv"
    assert main(["probe", "--op", "kvinject:alpha=1,layers=1-3", "--case", "add-000",
                 "--suite", str(work / "suite.jsonl"), "--model-cfg", str(work / "model.cfg"),
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "layer,step,cos_sim,degenerate"
    assert len(lines) - 1 == 4 * 2 * 2  # layers x steps x CFG passes
    in_band = [l for l in lines[1:] if l.split(",")[0] in ("1", "2")]
    assert all(l.split(",")[2] == "1.000000" for l in in_band)


def test_exit_codes(work, capsys):
    assert main(["run", "--op", "kvinject:alpha=2", "--suite", str(work / "suite.jsonl"),
                 "--out", str(work / "x.csv")]) == 1
    assert "alpha" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--axis", "gamma", "--out", "x"])
    assert exc.value.code == 1
    assert main(["probe", "--op", "baseline", "--case", "nope", "--suite", str(work / "suite.jsonl"),
                 "--out", str(work / "p.csv")]) == 1
    assert main(["run", "--op", "baseline", "--suite", str(work / "missing.jsonl"),
                 "--out", str(work / "x.csv")]) == 1
    # a run that fails inside the sampler
    bad = "compose(masactrl:neutral=a;masactrl:neutral=b)"
    assert main(["run", "--op", bad, "--suite", str(work / "suite.jsonl"),
                 "--model-cfg", str(work / "model.cfg"), "--out", str(work / "bad.csv")]) == 2
    assert not (work / "bad.csv").exists()
    # bands that do not fit the configured model are rejected before sampling
    assert main(["run", "--op", "kvinject:alpha=0.3,layers=2-9", "--suite", str(work / "suite.jsonl"),
                 "--model-cfg", str(work / "model.cfg"), "--out", str(work / "big.csv")]) == 1
    assert "exceeds 4 layers" in capsys.readouterr().err
    assert main(["sweep", "--axis", "steps", "--suite", str(work / "suite.jsonl"),
                 "--model-cfg", str(work / "model.cfg"), "--out", str(work / "s.csv")]) == 1
    assert "exceeds 2 steps" in capsys.readouterr().err
