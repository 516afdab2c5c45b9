import pytest

from idlalab import shells


@pytest.fixture(scope="session")
def table8():
    """Default d=3 shell table, enough coverage for the small-run tests."""
    return shells.build_shells(3, 8.0, 200.0)
