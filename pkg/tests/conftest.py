import pytest

from sciblog.config import SiteConfig
from sciblog.store import RecordStore


@pytest.fixture
def fast_config():
    # Low hash cost: credential strength is not under test here.
    return SiteConfig(password_iterations=500)


@pytest.fixture
def store(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    with RecordStore(data) as s:
        yield s
