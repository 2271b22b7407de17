import time
from dataclasses import dataclass

import pytest
from hypothesis import HealthCheck, settings

from radar_hr.evaluation import ReferenceTraining, train_reference_model
from radar_hr.net.model import ModelManifest, PulseNet

_CRITERIA: dict[int, str] = {}

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@dataclass
class TrainedModel:
    manifest: ModelManifest
    records: list[dict]
    n_train_windows: int
    seconds: float
    config: ReferenceTraining


@pytest.fixture(scope="session")
def reference_model() -> TrainedModel:
    """The end-to-end model, trained once per session on a fresh synthetic corpus."""
    cfg = ReferenceTraining()
    start = time.perf_counter()
    manifest, records, n = train_reference_model(cfg)
    return TrainedModel(manifest, records, n, time.perf_counter() - start, cfg)


@pytest.fixture(scope="session")
def reference_model_path(reference_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "sleep.rvm"
    reference_model.manifest.save(path)
    return path


@pytest.fixture(scope="session")
def untrained_model_paths(tmp_path_factory):
    """Random-init manifests for plumbing tests that do not depend on accuracy."""
    d = tmp_path_factory.mktemp("untrained")
    paths = {}
    for profile, length in (("sleep", 900), ("meditation", 240)):
        paths[profile] = d / f"{profile}.rvm"
        ModelManifest.from_net(PulseNet(input_length=length, seed=0), profile).save(paths[profile])
    return paths


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the verdict so the test can assert it."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 12):
        terminalreporter.write_line(_CRITERIA.get(n, f"criterion {n:>2}: NOT RUN"))
