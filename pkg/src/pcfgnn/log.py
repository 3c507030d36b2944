"""
Logging setup shared by the CLI and scripts.
"""

import logging

from rich.console import Console
from rich.logging import RichHandler


def setup_logging(level: str = "INFO") -> None:
    """
    Route the ``pcfgnn`` logger hierarchy to a rich handler on stderr.

    Safe to call more than once; the handler is replaced, not duplicated.
    """
    logger = logging.getLogger("pcfgnn")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    handler = RichHandler(
        console=Console(stderr=True),
        show_time=False,
        show_path=False,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level.upper())
    logger.propagate = False
