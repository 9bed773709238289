import time

from .log import get_logger

_logger = get_logger("chefshat.timer")


class Timer:
    """
    Wall clock of a block of matches, logged with its throughput on exit.
    Laps split the block into named parts, logged along with it.

    >>> with Timer("noop", games=0) as t:
    ...     t.lap("deal") >= 0
    True
    >>> t.elapsed >= 0, t.rate(), list(t.laps)
    (True, None, ['deal'])
    """

    def __init__(self, task, games=None, logger=None):
        self.task = task
        self.games = games
        self.logger = logger or _logger
        self.laps = {}
        self._start = self._last = None
        self.elapsed = 0.0

    def __enter__(self):
        self._start = self._last = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.elapsed = time.perf_counter() - self._start
        if exc_type is not None:
            self.logger.warning("%s: failed after %.1fs", self.task, self.elapsed)
            return
        laps = "".join(f", {name} {seconds:.1f}s" for name, seconds in self.laps.items())
        rate = self.rate()
        if rate is None:
            self.logger.info("%s: %.1fs%s", self.task, self.elapsed, laps)
        else:
            self.logger.info(
                "%s: %d games in %.1fs, %.1f games/s%s",
                self.task, self.games, self.elapsed, rate, laps,
            )

    def lap(self, name):
        """seconds since the previous lap, kept under `name`"""
        now = time.perf_counter()
        self.laps[name] = now - self._last
        self._last = now
        return self.laps[name]

    def rate(self):
        if not self.games or self.elapsed <= 0:
            return None
        return self.games / self.elapsed


if __name__ == "__main__":
    import doctest

    doctest.testmod()
