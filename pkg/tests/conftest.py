import pytest


@pytest.fixture(autouse=True)
def setup_log_level(monkeypatch):
    monkeypatch.setenv('ADVSIM_LOG', 'WARNING')
