import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from lowrapport.io import load_corpus  # noqa: E402
from lowrapport.synth import GenConfig, PlantedEffect, generate, generate_corpus  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# six short sessions: cheap enough for per-test feature extraction
SMALL = GenConfig(sessions=6, four_person_sessions=3, duration=150.0, frame_rate=5.0,
                  planted_effects=(PlantedEffect("face", 1, 1.5),), seed=11)


@pytest.fixture(scope="session")
def small_cfg():
    return SMALL


@pytest.fixture(scope="session")
def small_generated():
    return generate(SMALL)


@pytest.fixture(scope="session")
def small_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    return generate_corpus(SMALL, out)


@pytest.fixture(scope="session")
def small_corpus(small_dir):
    return load_corpus(small_dir)
