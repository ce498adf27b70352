import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--suite", default="all", choices=["network", "local", "all"], help="test suite to run"
    )
    parser.addoption(
        "--skip-slow", action="store_true", default=False, help="skip full size simulations and timings"
    )

def pytest_collection_modifyitems(config, items):
    suite = config.getoption("--suite")
    if config.getoption("--skip-slow"):
        skipSlow = pytest.mark.skip(reason="--skip-slow given")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(skipSlow)
    if suite == "all":
        # Don't skip any tests
        return
    skip = pytest.mark.skip(reason="skipping non-selected suite")
    for item in items:
        if suite != "network" and "network" in item.keywords:
            item.add_marker(skip)
        if suite == "network" and "network" not in item.keywords:
            item.add_marker(skip)
