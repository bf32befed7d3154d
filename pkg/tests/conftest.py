import numpy as np
import pytest

from brainmri.volume_io import Volume

ELEMENT_TYPES = ("uint8", "int16", "float32")


def random_volume(rng, dims=(5, 4, 3), element_type="int16", spacing=(1.0, 1.5, 2.0), orientation="RAS"):
    if element_type == "uint8":
        data = rng.integers(0, 256, dims, dtype=np.uint8)
    elif element_type == "int16":
        data = rng.integers(-32768, 32768, dims, dtype=np.int16)
    else:
        data = rng.standard_normal(dims).astype(np.float32) * 100
    return Volume(data, spacing, orientation)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def format_cases():
    """(element type, endianness) pairs; uint8 has no byte order."""
    for etype in ELEMENT_TYPES:
        for endian in (("little",) if etype == "uint8" else ("little", "big")):
            yield etype, endian


# one line per acceptance criterion, echoed in the terminal summary so the
# results show up even when output capture is on
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
