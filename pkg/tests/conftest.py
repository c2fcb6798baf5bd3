import numpy as np
import pytest

from mirtmis.model import CompParams


def random_params(gen, M, K, scale=1.0):
    alpha = gen.uniform(0.3, 1.8, (M, K)) * scale
    beta = gen.normal(0.0, 1.0, M)
    return CompParams(alpha, beta)


def all_patterns(M):
    return ((np.arange(2**M)[:, None] >> np.arange(M)) & 1).astype(float)


@pytest.fixture(scope="session")
def bias_run():
    """Desk-scale bias experiment: 120-item design, 10^5 learners."""
    from mirtmis.experiments import RunConfig, bias_pipeline

    return bias_pipeline(RunConfig(subcommand="bias", seed=2024, N=100_000))


@pytest.fixture(scope="session")
def variance_k2(tmp_path_factory):
    """Desk-scale K=2 variance experiment: n=2000, R=200."""
    import time

    from mirtmis.experiments import RunConfig, run_variance_experiment

    start = time.perf_counter()
    cfg = RunConfig(subcommand="variance", design="variance", K=2, seed=11,
                    out=str(tmp_path_factory.mktemp("variance_k2")))
    report, exp = run_variance_experiment(cfg)
    return report, exp, time.perf_counter() - start


@pytest.fixture(scope="session")
def variance_k3(tmp_path_factory):
    """K=3 variance design without the replication study."""
    from mirtmis.experiments import RunConfig, run_variance_experiment

    cfg = RunConfig(subcommand="variance", design="variance", K=3, seed=12, R=0,
                    out=str(tmp_path_factory.mktemp("variance_k3")))
    report, _ = run_variance_experiment(cfg)
    return report


ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion for the run summary."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
