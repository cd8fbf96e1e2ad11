import json
import os
import sys

import pytest
from hypothesis import settings

HERE = os.path.dirname(__file__)
sys.path.insert(0, HERE)

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def frozen():
    with open(os.path.join(HERE, "data", "oracles.json")) as fh:
        return json.load(fh)
