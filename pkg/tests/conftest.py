import numpy as np
import pytest
from scipy import ndimage

from gcpw.imaging import MultiChannelImage

_criteria: dict[int, dict] = {}


def textured(h=48, w=64, seed=0, channels=3):
    """Smooth random texture in [0.1, 0.9]; cheap stand-in for a natural image."""
    rng = np.random.default_rng(seed)
    planes = []
    for _ in range(channels):
        n = ndimage.gaussian_filter(rng.standard_normal((h, w)), 2.0)
        planes.append(0.5 + 0.35 * n / np.abs(n).max())
    return MultiChannelImage.full(np.stack(planes, axis=2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def texture():
    return textured()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    number, name = marker.args
    entry = _criteria.setdefault(number, {"name": name, "ok": True, "details": []})
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry["ok"] = False
    if rep.when == "call":
        entry["details"].extend(f"{k}={v}" for k, v in item.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] else "FAIL"
        detail = f" ({', '.join(e['details'])})" if e["details"] else ""
        terminalreporter.write_line(f"criterion {number:2d} {e['name']}: {status}{detail}")
