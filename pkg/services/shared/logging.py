"""
Structured logging for the robust-MDP toolkit.

Records are structlog events rendered as JSON for batch runs or as
console lines for interactive use. They go to stderr by default so that
command output on stdout stays machine-readable. Every record carries the
identifier of the current run and any experiment fields bound with
``bind_run``.
"""

import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Any, TextIO
from uuid import uuid4

import structlog
from structlog.types import EventDict, Processor

_run_id: ContextVar[str | None] = ContextVar("run_id", default=None)


# =============================================================================
# Run context
# =============================================================================


def get_run_id() -> str:
    """Identifier of the current run, created on first use."""
    rid = _run_id.get()
    if rid is None:
        rid = uuid4().hex[:12]
        _run_id.set(rid)
    return rid


def set_run_id(rid: str) -> None:
    _run_id.set(rid)


@contextmanager
def bind_run(**fields: Any) -> Iterator[None]:
    """
    Attach experiment fields (kind, rect, rho, n, ...) to every record in scope.

    Bindings nest; leaving the block restores the outer ones.
    """
    tokens = structlog.contextvars.bind_contextvars(**fields)
    try:
        yield
    finally:
        structlog.contextvars.reset_contextvars(**tokens)


# =============================================================================
# Processors
# =============================================================================


def add_run_id(logger: logging.Logger, method_name: str, event_dict: EventDict) -> EventDict:
    event_dict["run_id"] = get_run_id()
    return event_dict


def service_tagger(service_name: str) -> Processor:
    """Processor stamping records with the emitting service."""

    def add_service(logger: logging.Logger, method_name: str, event_dict: EventDict) -> EventDict:
        event_dict.setdefault("service", service_name)
        return event_dict

    return add_service


def _processor_chain(log_format: str, service_name: str, stream: TextIO) -> list[Processor]:
    chain: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.UnicodeDecoder(),
        add_run_id,
        service_tagger(service_name),
    ]
    if log_format == "json":
        return chain + [structlog.processors.format_exc_info, structlog.processors.JSONRenderer()]
    return chain + [structlog.dev.ConsoleRenderer(colors=stream.isatty())]


# =============================================================================
# Setup
# =============================================================================


def configure_logging(
    log_level: str = "INFO",
    log_format: str = "text",
    service_name: str = "robustmdp",
    stream: str = "stderr",
) -> None:
    """
    Install the structlog pipeline and the stdlib root handler.

    Safe to call more than once per process; the latest call wins.

    Args:
        log_level: DEBUG, INFO, WARNING, ERROR or CRITICAL
        log_format: 'json' or 'text'
        service_name: Value of the ``service`` field on every record
        stream: 'stdout' or 'stderr'
    """
    target = sys.stdout if stream == "stdout" else sys.stderr
    structlog.configure(
        processors=_processor_chain(log_format, service_name, target),
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=False,
    )
    logging.basicConfig(
        format="%(message)s",
        stream=target,
        level=getattr(logging, log_level.upper()),
        force=True,
    )


def get_logger(name: str | None = None) -> structlog.stdlib.BoundLogger:
    """Logger for a module, usually called with ``__name__``."""
    return structlog.get_logger(name)
