import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def scene_factory():
    from dataclasses import replace

    from rdct.synth import SceneConfig, generate_scene, trial_rng

    cache = {}

    def make(seed=0, trial=0, **kw):
        key = (seed, trial, tuple(sorted(kw.items())))
        if key not in cache:
            cache[key] = generate_scene(replace(SceneConfig(), **kw), trial_rng(seed, trial))
        return cache[key]

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
