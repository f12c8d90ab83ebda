import numpy as np
import pytest

from packcache.cache import CacheEntry, FrameCache, Position3D, Region, new_cache, set_anchors

_criteria: dict[int, list[str]] = {}


def make_frame(frame_index, n, d=4, *, rng=None, masked=(), mass=None, t=None, width=4):
    """A fresh frame of ``n`` tokens laid out on a ``width``-wide grid."""
    rng = rng or np.random.default_rng(frame_index)
    entries = []
    for i in range(n):
        entries.append(
            CacheEntry(
                rng.standard_normal(d),
                rng.standard_normal(d),
                Position3D(frame_index if t is None else t, *divmod(i, width)),
                Region.history(frame_index),
                index=i,
                masked=i in masked,
                attn_mass=0.0 if mass is None else float(mass[i]),
            )
        )
    return FrameCache(frame_index, entries, n)


def make_anchors(n_prompt, n_cond, d=4, rng=None, width=4):
    rng = rng or np.random.default_rng(1234)
    prompt = [
        CacheEntry(rng.standard_normal(d), rng.standard_normal(d), Position3D(0, 0, 0, i),
                   Region.text(), index=i)
        for i in range(n_prompt)
    ]
    cond = [
        CacheEntry(rng.standard_normal(d), rng.standard_normal(d),
                   Position3D(0, *divmod(i, width), n_prompt + i), Region.cond(), index=i)
        for i in range(n_cond)
    ]
    return prompt, cond


@pytest.fixture
def anchored_cache():
    def build(w=3, n=16, d=4, n_prompt=2, n_cond=4):
        cache = new_cache(w, n, d, d, frame_width=4)
        return set_anchors(cache, *make_anchors(n_prompt, n_cond, d))

    return build


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    n = getattr(report, "criterion", None)
    if n is not None:
        _criteria.setdefault(n, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        outcomes = _criteria[n]
        status = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}")
