import pytest

from jitter_reflect import JitterSpec, SamplingConfig


class ScriptedRng:
    """Stands in for a Generator, replaying fixed uniforms."""

    def __init__(self, *values):
        self.values = list(values)

    def random(self, size=None):
        if size is None:
            return self.values.pop(0)
        out = self.values[:size]
        del self.values[:size]
        return out


@pytest.fixture
def flip_third():
    return SamplingConfig(2, 1, "discrete", JitterSpec.uniform())


@pytest.fixture
def cont_unit():
    return SamplingConfig(1.0, 0.1, "continuous", JitterSpec.uniform())


def uniform_discrete(t, t_p):
    return SamplingConfig(t, t_p, "discrete", JitterSpec.uniform())


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
