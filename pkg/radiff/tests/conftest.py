import pytest  # noqa: D100


def pytest_addoption(parser):  # noqa: D103
    parser.addoption(
        "--with_training",
        action="store_true",
        default=False,
        help="run tests that train models for many epochs",
    )


def pytest_configure(config):  # noqa: D103
    config.addinivalue_line(
        "markers", "with_training: mark test that train models for many epochs"
    )


def pytest_collection_modifyitems(config, items):  # noqa: D103
    if config.getoption("--with_training"):
        return
    skip_slow = pytest.mark.skip(reason="need --with_training option to run")
    for item in items:
        if "with_training" in item.keywords:
            item.add_marker(skip_slow)
