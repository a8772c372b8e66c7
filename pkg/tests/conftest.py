from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=25)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_volume(rng, dims=(8, 8, 8), spacing=(1.0, 1.0, 1.0), lo=0.0, hi=1.0):
    from volren.volume import ScalarVolume

    nx, ny, nz = dims
    data = rng.uniform(lo, hi, size=(nz, ny, nx)).astype(np.float32)
    return ScalarVolume(data, spacing)


def fb_grid(fb, channel=0):
    """Framebuffer channel flipped to y-up row order, matching voxel index order."""
    return fb.rgba[::-1, :, channel]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one line per acceptance criterion after the run."""
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None) if module else None
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(results, key=lambda c: int(c[1:])):
        ok, detail = results[cid]
        terminalreporter.write_line(f"[{cid}] {'PASS' if ok else 'FAIL'}: {detail}")
