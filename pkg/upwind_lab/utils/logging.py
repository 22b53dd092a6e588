import logging

from rich.logging import RichHandler

LOGGING_TRACE = 5

_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG, LOGGING_TRACE)
_PLAIN_FORMAT = "[%(asctime)s] %(levelname)-8s %(name)s: %(message)s"


class ThirdPartyNoiseFilter(logging.Filter):
    """Logging filter dropping chatty numerical-library warnings below ERROR."""

    _PREFIXES = ("matplotlib", "numba", "shapely.geos")

    def filter(self, record: logging.LogRecord) -> bool:
        """Keep records of our own loggers and errors of everybody else."""
        return record.levelno >= logging.ERROR or not record.name.startswith(
            self._PREFIXES
        )


def level_for(verbose: int, *, quiet: bool) -> int:
    """Map the count of ``-v`` flags to a level; ``quiet`` wins."""
    if quiet:
        return logging.ERROR
    return _LEVELS[min(max(verbose, 0), len(_LEVELS) - 1)]


def configure_logging(verbose: int, *, quiet: bool, plain: bool) -> None:
    """Route library, scipy and ``warnings`` output through one handler.

    Args:
        verbose: Number of ``-v`` flags: 0 warning, 1 info, 2 debug, 3+ trace.
        quiet: Only errors.
        plain: Timestamped plain lines instead of the rich console handler.
    """
    log_level = level_for(verbose, quiet=quiet)
    logging.addLevelName(LOGGING_TRACE, "TRACE")

    if plain:
        handler: logging.Handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_PLAIN_FORMAT, "%Y-%m-%d %H:%M:%S"))
    else:
        handler = RichHandler(rich_tracebacks=True, log_time_format="[%X]")
    handler.setLevel(log_level)
    handler.addFilter(ThirdPartyNoiseFilter())

    logging.basicConfig(level=log_level, handlers=[handler], force=True)
    logging.getLogger("upwind_lab").setLevel(log_level)
    # numerical RuntimeWarnings from numpy/scipy end up in the same stream
    logging.captureWarnings(capture=True)
