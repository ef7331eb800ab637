import logging
import sys
import time
from typing import Literal, TypeAlias, override

TRACE = 5

NamedFd: TypeAlias = Literal["stdout", "stderr"]


class ConciseFormatter(logging.Formatter):
    """
    One short line per record: level initial, seconds since start, abbreviated logger.

    Example output for 'sosim.pricing':
        ```
        D    0.3 so.pr:  priced 14 agents in 37 sweeps
        ```
    """

    start_time = time.monotonic()

    @override
    def format(self, record):
        elapsed = time.monotonic() - self.start_time
        module = ".".join(p[:2] for p in record.name.split("."))
        prefix = f"{record.levelname[0]} {elapsed:.1f} {module}:"
        text = f"{prefix:15s}{record.getMessage()}"
        if record.exc_info:
            text += "\n" + self.formatException(record.exc_info)
        return text


class SimpleLoggingConfig:
    """Build a concise logging configuration with a fluent interface."""

    def __init__(self):
        self._base_level: int = logging.WARNING
        self._stream: NamedFd = "stderr"
        self._levels: list[tuple[str, int]] = []

    def __call__(self):
        return self.apply()

    def base_level(self, level: int):
        """Set the root logging level."""
        self._base_level = level
        return self

    def to_stream(self, stream: NamedFd):
        self._stream = stream
        return self

    def level(self, level: int, *names: str):
        """Set `level` on each named logger."""
        self._levels.extend((name, level) for name in names)
        return self

    def warning(self, *names: str):
        return self.level(logging.WARNING, *names)

    def info(self, *names: str):
        return self.level(logging.INFO, *names)

    def debug(self, *names: str):
        return self.level(logging.DEBUG, *names)

    def trace(self, *names: str):
        return self.level(TRACE, *names)

    def verbosity(self, count: int, *names: str):
        """Map a repeated `-v` flag onto the named loggers: 0 warning, 1 info, 2 debug, 3+ trace."""
        levels = [logging.WARNING, logging.INFO, logging.DEBUG, TRACE]
        return self.level(levels[min(count, len(levels) - 1)], *names)

    def apply(self):
        logging.addLevelName(TRACE, "TRACE")

        handler = logging.StreamHandler(sys.stdout if self._stream == "stdout" else sys.stderr)
        handler.setFormatter(ConciseFormatter())
        logging.basicConfig(level=self._base_level, handlers=[handler], force=True)

        for name, level in self._levels:
            logging.getLogger(name).setLevel(level)
        return self
