import os
import sys

sys.path.insert(0, os.path.dirname(__file__))


def pytest_terminal_summary(terminalreporter):
    import oracles

    if oracles.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in oracles.ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
