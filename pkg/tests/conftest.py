import io

import numpy as np
import pytest

from metierkit import ingest, synth

RAW_HEADER = ",".join(ingest.HEADER)


def raw_csv(*lines):
    return io.StringIO("\n".join((RAW_HEADER,) + lines) + "\n")


def prepared(n_landings, seed=1, **profile):
    prof = synth.GeneratorProfile(n_landings=n_landings, seed=seed, **profile)
    rows, rej = ingest.parse_raw(synth.to_csv(synth.generate(prof)))
    rows, rej2 = ingest.clean(rows)
    table, rej3 = ingest.consolidate(rows)
    assert not (rej or rej2 or rej3)
    return table, ingest.species_groups(rows)


@pytest.fixture(scope="session")
def small_corpus():
    return prepared(1500, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; the summary prints a line per criterion."""

    def record(number, text, ok):
        CRITERIA[number] = (text, bool(ok))
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}")
        assert ok, f"criterion {number} failed: {text}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 12):
        if number not in CRITERIA:
            terminalreporter.write_line(f"NOT RUN criterion {number}")
            continue
        text, ok = CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}")
