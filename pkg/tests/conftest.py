import numpy as np
import pytest

from gmfc.env import malware_env, sis_env
from gmfc.graphon import ErdosRenyi, RandomGeometric, StochasticBlock

ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def record(name: str, ok: bool, detail: str = ""):
    ACCEPTANCE_RESULTS[name] = (bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def sis():
    return sis_env()


@pytest.fixture
def malware():
    return malware_env()


PAPER_GRAPHONS = {
    "erdos_renyi": ErdosRenyi(0.8),
    "stochastic_block": StochasticBlock(0.9, 0.4, 0.5),
    "random_geometric": RandomGeometric(),
}


@pytest.fixture(params=sorted(PAPER_GRAPHONS))
def paper_graphon(request):
    return PAPER_GRAPHONS[request.param]


def random_ensemble(rng, m, s):
    return rng.dirichlet(np.ones(s), size=m)


def random_policy(rng, m, s, a):
    return rng.dirichlet(np.ones(a), size=(m, s))
