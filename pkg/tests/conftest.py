from __future__ import annotations

import pytest

from ruinlab.model import RiskModel, RuinQuery
from tests.builders import make_model, make_query


@pytest.fixture
def base_model() -> RiskModel:
    return make_model()


@pytest.fixture
def base_query() -> RuinQuery:
    return make_query()
