"""Shared fixtures."""
import pytest

from app import create_app


@pytest.fixture
def app():
    """Application built with the testing configuration."""
    return create_app('testing')


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def write_config(tmp_path):
    """Write experiment config text to a file and return its path."""
    def _write(text, name='experiment.cfg'):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _write
