import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("suite", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


@pytest.fixture(autouse=True, scope="session")
def gamma_cache_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("gamma-cache")
    old = os.environ.get("COARSE_SKETCH_CACHE")
    os.environ["COARSE_SKETCH_CACHE"] = str(path)
    yield path
    if old is None:
        os.environ.pop("COARSE_SKETCH_CACHE", None)
    else:
        os.environ["COARSE_SKETCH_CACHE"] = old
