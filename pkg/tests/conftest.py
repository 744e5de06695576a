import functools

import pytest

from finslerlab.calculus import GeometryCache
from finslerlab.metric import load_shipped, sample, shipped_specs

SHIPPED = tuple(shipped_specs())


@functools.lru_cache(maxsize=None)
def spec(name):
    return load_shipped(name)


@functools.lru_cache(maxsize=None)
def samples(name, count=6, seed=0):
    return sample(spec(name), count, seed)


_CACHES: dict = {}


def cache_for(name):
    """One geometry cache per shipped spec, shared across test modules."""
    return _CACHES.setdefault(name, GeometryCache())


@pytest.fixture(params=SHIPPED)
def shipped_name(request):
    return request.param


ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, title: str, problems: list[str], detail: str = "") -> None:
    """Record and print one PASS/FAIL line; the test asserts separately."""
    status = "PASS" if not problems else "FAIL"
    tail = detail if not problems else "; ".join(problems[:5])
    line = f"{status} criterion {number}: {title}" + (f" ({tail})" if tail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
