import pytest

from exposure_lab.corpus import Post


@pytest.fixture
def simple_posts():
    return [
        Post("q1", 2020, 10, ("t1", "t2"), "US"),
        Post("q2", 2019, 15, ("t1",), "US"),
        Post("q3", 2021, -3, ("t2",), "US"),
    ]


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """A generated synthetic corpus shared across end-to-end tests."""
    from exposure_lab.fixture import generate_fixture

    path = tmp_path_factory.mktemp("fixture")
    generate_fixture(path, seed=0)
    return path
