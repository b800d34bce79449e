import logging
import os
import sys

import click
import orjson
import structlog

error_message_style = click.style("ERROR: ", fg="red")

logging.basicConfig(
    format="%(message)s",
    stream=sys.stderr,
    level=logging.DEBUG,
)


def _dumps(event: dict, **kwargs) -> str:
    # Sampler events carry numpy scalars and arrays.
    return orjson.dumps(
        event,
        default=str,
        option=orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS,
    ).decode()


def _renderers(color: bool) -> list:
    if color:
        return [structlog.dev.ConsoleRenderer()]

    return [
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.format_exc_info,
        structlog.processors.dict_tracebacks,
        structlog.processors.JSONRenderer(serializer=_dumps),
    ]


def configure_logger(debug: bool = False):
    """Configure structlog for a CLI invocation.

    Colour console output is used on a TTY unless ``NO_COLOR`` is set. Otherwise,
    one JSON object is written to stderr per event.

    :param debug: show debug events and call-site details
    """
    processors = [
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.processors.StackInfoRenderer(),
    ]

    if debug:
        processors.append(
            structlog.processors.CallsiteParameterAdder(
                {
                    structlog.processors.CallsiteParameter.MODULE,
                    structlog.processors.CallsiteParameter.FUNC_NAME,
                    structlog.processors.CallsiteParameter.LINENO,
                },
            ),
        )

    color = sys.stderr.isatty() and not os.environ.get("NO_COLOR")

    structlog.configure(
        processors=processors + _renderers(color),
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.DEBUG if debug else logging.INFO,
        ),
        cache_logger_on_first_use=True,
    )


def echo_error(error: Exception):
    """Print ``error`` to stderr with the red error prefix."""
    click.echo(f"{error_message_style}{error}", err=True)
