from pathlib import Path

import numpy as np
import pytest

from evasov.imagery import Frame, load_ppm

FIXTURES = Path(__file__).parent / "fixtures"
NATURAL = sorted(FIXTURES.glob("natural_*.ppm"))


def random_frame(rng, width, height) -> Frame:
    return Frame(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def natural_frames():
    return [load_ppm(p) for p in NATURAL]


@pytest.fixture(scope="session")
def natural(natural_frames):
    return natural_frames[0]


def write_clip(directory, frame: Frame, n: int, shift: int = 0) -> Path:
    """n frames, each the previous one rolled ``shift`` columns."""
    from evasov.imagery import frame_path, save_ppm
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    px = frame.pixels
    for i in range(1, n + 1):
        save_ppm(Frame(np.roll(px, shift * (i - 1), axis=1)), frame_path(directory, i))
    return directory


def static_trace(uid, yaw, pitch=0.0, seconds=3.0, hz=10.0, drift=0.0):
    from evasov.prediction import Trace
    t = np.arange(int(round(seconds * hz)) + 1) / hz
    ang = np.stack([yaw + drift * t, np.full_like(t, pitch), np.zeros_like(t)], axis=1)
    return Trace(uid, t, ang)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdicts(request):
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter):
    lines = terminalreporter.config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
