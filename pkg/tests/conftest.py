import numpy as np
import pytest

from finemanip.data import record_episode
from finemanip.models import ModelConfig
from finemanip.sim import load_task
from finemanip.training import TrainConfig

SMALL_POINTS = 128


@pytest.fixture(scope="session")
def small_episodes():
    """Two low-resolution episodes for each of four tasks."""
    eps = []
    for task in ("press-button", "slide-drawer-open", "lift-block", "push-block-to-target"):
        spec = load_task(task)
        for seed in (0, 1):
            eps.append(record_episode(spec.with_variation(seed), seed, n_points=SMALL_POINTS))
    return eps


@pytest.fixture(scope="session")
def tiny_cfg():
    return ModelConfig.tiny()


def tiny_train_config(**kw) -> TrainConfig:
    model = ModelConfig.tiny().to_json()
    base = dict(epochs=1, batch_size=4, feature_dim=8, model=model, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
