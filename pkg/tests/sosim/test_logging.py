import logging

import pytest

from sosim.logging import TRACE, ConciseFormatter, SimpleLoggingConfig


@pytest.fixture(autouse=True)
def _restore_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
    logging.getLogger("sosim").setLevel(logging.NOTSET)


@pytest.mark.parametrize("count, level", [(0, logging.WARNING), (1, logging.INFO), (2, logging.DEBUG), (3, TRACE), (7, TRACE)])
def test_verbosity(count, level):
    SimpleLoggingConfig().verbosity(count, "sosim").apply()
    assert logging.getLogger("sosim").level == level
    assert logging.getLevelName(TRACE) == "TRACE"


def test_fluent_levels():
    SimpleLoggingConfig().base_level(logging.ERROR).debug("sosim").to_stream("stdout")()
    assert logging.getLogger().level == logging.ERROR
    assert logging.getLogger("sosim").level == logging.DEBUG


def test_concise_format():
    record = logging.LogRecord("sosim.pricing", logging.DEBUG, __file__, 1, "priced %d agents", (14,), None)
    line = ConciseFormatter().format(record)
    assert line.startswith("D ")
    assert "so.pr:" in line
    assert line.endswith("priced 14 agents")
