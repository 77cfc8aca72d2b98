import pytest

from attnroute import ModelConfig, SampleConfig, build_model


@pytest.fixture(scope="session")
def small_cfg():
    return ModelConfig(num_layers=4, d_model=16, heads=2, noise_tokens=4, source_tokens=4,
                       text_tokens=4, weight_seed=7)


@pytest.fixture(scope="session")
def small_model(small_cfg):
    return build_model(small_cfg)


@pytest.fixture
def small_sc():
    return SampleConfig(steps=4, cfg_scale=4.0, seed=3)


@pytest.fixture(scope="session")
def model():
    return build_model(ModelConfig())


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    n, title = mark.args
    prev = _ACCEPTANCE.get(n)
    if rep.when == "call" or rep.failed:
        status = "PASS" if rep.passed else "FAIL"
        if prev is not None and prev[1] == "FAIL":
            status = "FAIL"
        secs = rep.duration + (prev[2] if prev else 0.0)
        _ACCEPTANCE[n] = (title, status, secs)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, status, secs = _ACCEPTANCE[n]
        tr.write_line(f"AC{n:02d} {status}  {title}  ({secs:.1f}s)")
    passed = sum(1 for _, s, _ in _ACCEPTANCE.values() if s == "PASS")
    tr.write_line(f"{passed}/{len(_ACCEPTANCE)} acceptance criteria passed")
