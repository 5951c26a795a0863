import numpy as np
import pytest

from cfmimo.channel import estimation_statistics
from cfmimo.power_control import build_socp
from cfmimo.scenario import SystemConfig, generate_drop


def make_drop(L=3, M=6, K=4, tau_p=2, seed=0, **kw):
    kw.setdefault("area_side", 200.0)
    cfg = SystemConfig(L=L, M=M, K=K, tau_p=tau_p, **kw)
    scen = generate_drop(cfg, seed)
    stats = estimation_statistics(scen.beta, cfg.p_ul, scen.pilots, cfg.tau_p)
    return cfg, scen, stats


def make_instance(L=3, M=6, K=4, tau_p=2, seed=0, **kw):
    cfg, scen, stats = make_drop(L, M, K, tau_p, seed, **kw)
    return build_socp(stats, scen.beta, scen.pilots, cfg.M, cfg.tau_p, cfg.p_max_dl)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_drop():
    return make_drop()


# one-line verdicts collected by the acceptance suite, printed after the run
ACCEPTANCE = {}


def record(number: int, title: str, passed: bool, detail: str = ""):
    ACCEPTANCE[number] = f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
