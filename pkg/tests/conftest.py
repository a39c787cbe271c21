import numpy as np
import pytest

from tractshape.io.cluster import FiberCluster


def random_cluster(rng, n_streamlines=None, cluster_id=1, channels=True):
    n = int(n_streamlines if n_streamlines is not None else rng.integers(2, 40))
    lines = [rng.normal(size=(int(rng.integers(2, 12)), 3)) * rng.uniform(0.5, 20) for _ in range(n)]
    scalars = {}
    if channels:
        scalars = {
            "FA": [rng.uniform(0, 1, len(s)) for s in lines],
            "MD": [rng.uniform(5e-4, 1e-3, len(s)) for s in lines],
        }
    return FiberCluster(cluster_id, lines, scalars)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_cohort():
    """40 subjects, 10 clusters; shared by the pipeline and CLI tests."""
    from tractshape.synth import CohortSpec, gen_cohort

    return gen_cohort(CohortSpec(n_subjects=40, n_clusters=10, planted_clusters=(2, 6), nos_range=(20, 40), seed=3))


_CRITERIA = {}


@pytest.fixture(scope="session")
def criterion():
    """Record one pass/fail line per acceptance criterion; printed now and again in the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
