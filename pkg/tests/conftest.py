import logging
import os
import re
import time
from pathlib import Path

import pytest

from rein.config import ExperimentConfig
from rein.experiment import desk_protocol

VERDICTS: dict[int, str] = {}


@pytest.fixture(scope="session")
def desk_results(tmp_path_factory):
    """Desk-scale springs sweep shared by the trend criteria.

    Set REIN_DESK_DIR to keep results between sessions; by default every
    session trains from scratch.
    """
    logging.getLogger("rein").setLevel(logging.INFO)
    root = os.environ.get("REIN_DESK_DIR")
    work = Path(root) if root else tmp_path_factory.mktemp("desk")
    start = time.time()
    results = desk_protocol(ExperimentConfig(), work)
    results["session_seconds"] = time.time() - start
    return results


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for the acceptance criterion under test."""
    number = int(re.match(r"test_criterion_(\d+)", request.node.name).group(1))

    def record(ok: bool, detail: str):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS[number] = line
        print(line)

    yield record
    if number not in VERDICTS:
        record(False, "did not complete")


COLLECTED: set[int] = set()


def pytest_collection_finish(session):
    for item in session.items:
        m = re.match(r"test_criterion_(\d+)", item.name)
        if m:
            COLLECTED.add(int(m.group(1)))


def pytest_terminal_summary(terminalreporter):
    if COLLECTED:
        terminalreporter.section("acceptance criteria")
        for n in sorted(COLLECTED):
            terminalreporter.write_line(VERDICTS.get(n, f"CRITERION {n}: FAIL  did not run to completion"))
