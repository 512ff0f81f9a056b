import numpy as np
import pytest

from drasp import numcore as nc
from drasp.pooling import AttentionParams, FusionParams

# acceptance criteria report: (number, title) -> (passed, detail)
_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    key = tuple(marker.args)
    if rep.when == "setup" and rep.passed:
        return
    detail = getattr(item, "criterion_detail", "")
    if rep.failed:
        detail = (detail + " " if detail else "") + str(rep.longrepr).strip().splitlines()[-1][:160]
    _ACCEPTANCE[key] = (rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), (passed, detail) in sorted(_ACCEPTANCE.items()):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {num}. {title}  {detail}".rstrip())


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_attention(rng, d, d_attn=4, scale=1.0):
    return AttentionParams(
        nc.Parameter("W", scale * rng.uniform(-1, 1, (d_attn, d))),
        nc.Parameter("b", scale * rng.uniform(-1, 1, d_attn)),
        nc.Parameter("v", scale * rng.uniform(-1, 1, d_attn)),
    )


def zero_v_attention(rng, d, d_attn=4):
    p = random_attention(rng, d, d_attn)
    p.v.value = np.zeros(d_attn)
    return p


def fusion(alpha, beta):
    f = FusionParams.init()
    f.alpha.value = np.array(float(alpha))
    f.beta.value = np.array(float(beta))
    return f
