import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("CPLAB_FULL_PROTOCOL") == "1":
        return
    skip = pytest.mark.skip(
        reason="full-protocol scale (hours); set CPLAB_FULL_PROTOCOL=1 to run"
    )
    for item in items:
        if "full_protocol" in item.keywords:
            item.add_marker(skip)
