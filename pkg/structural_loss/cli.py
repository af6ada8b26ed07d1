"""
Shared plumbing for the management commands: map loading, SSL flag parsing
and the exception-to-exit-code mapping.

Exit codes: 2 missing file, 3 unreadable format, 4 shape mismatch, 1 anything else.
"""
from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Final, Iterator, Mapping, Optional, TextIO, Union

import numpy as np
from django.core.management.base import BaseCommand, CommandError, CommandParser

from .codecs import read_labels, read_segt, sniff_format
from .exceptions import EmptyConfusionMatrixError, GridFormatError, GridValidationError, ShapeMismatchError
from .grids import one_hot_array
from .local_stats import DEFAULT_SIGMA, DEFAULT_WINDOW_SIZE
from .ssl import DEFAULT_BETA, DEFAULT_C4, DEFAULT_LAMBDA, SslParams

logger: logging.Logger = logging.getLogger(__name__)

EXIT_FAILURE: Final[int] = 1
EXIT_MISSING_FILE: Final[int] = 2
EXIT_BAD_FORMAT: Final[int] = 3
EXIT_SHAPE_MISMATCH: Final[int] = 4


@contextmanager
def command_errors() -> Iterator[None]:
    """Re-raise library failures as CommandError with a stable return code."""
    try:
        yield
    except CommandError:
        raise
    except FileNotFoundError as exc:
        raise CommandError(f"File not found: {exc.filename}", returncode=EXIT_MISSING_FILE) from exc
    except GridFormatError as exc:
        raise CommandError(str(exc), returncode=EXIT_BAD_FORMAT) from exc
    except ShapeMismatchError as exc:
        raise CommandError(str(exc), returncode=EXIT_SHAPE_MISMATCH) from exc
    except (GridValidationError, EmptyConfusionMatrixError, ValueError, OSError) as exc:
        raise CommandError(str(exc), returncode=EXIT_FAILURE) from exc


def usage_error(command: BaseCommand, name: str, message: str) -> CommandError:
    usage: str = command.create_parser("manage.py", name).format_usage()
    return CommandError(f"{message}\n{usage}", returncode=EXIT_FAILURE)


def load_planes(path: Union[str, Path], class_count: Optional[int] = None) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Read a map file as (C, H, W) planes. Label PGMs become one-hot planes and
    also return their non-void mask; SEGT tensors return no mask.
    """
    if sniff_format(path) == "pgm":
        labels = read_labels(path, class_count)
        return one_hot_array(labels.ids, labels.class_count), labels.valid_mask
    return read_segt(path), None


def add_window_arguments(parser: CommandParser) -> None:
    parser.add_argument("--k", type=int, default=DEFAULT_WINDOW_SIZE, help="Gaussian window size (odd)")
    parser.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="Gaussian window standard deviation")


def add_ssl_arguments(parser: CommandParser, defaults: bool = True) -> None:
    """SSL flags; with defaults=False they stay None so callers can tell whether they were given."""
    parser.add_argument("--k", type=int, default=DEFAULT_WINDOW_SIZE if defaults else None, help="Gaussian window size (odd)")
    parser.add_argument("--sigma", type=float, default=DEFAULT_SIGMA if defaults else None, help="Gaussian window sigma")
    parser.add_argument("--beta", type=float, default=DEFAULT_BETA if defaults else None, help="Hard-example threshold ratio")
    parser.add_argument("--c4", type=float, default=DEFAULT_C4 if defaults else None, help="Normalization stabilizer")
    parser.add_argument("--lam", type=float, default=DEFAULT_LAMBDA if defaults else None, help="Weight of BCE in the combined loss")
    parser.add_argument("--no-ohem", action="store_true", help="Keep every element instead of mining hard ones")
    parser.add_argument("--no-reweight", action="store_true", help="Weight hard examples uniformly")


SSL_OPTION_NAMES: Final[tuple[str, ...]] = ("k", "sigma", "beta", "c4", "lam")
SSL_FLAG_NAMES: Final[tuple[str, ...]] = ("no_ohem", "no_reweight")


def ssl_options_given(options: Mapping[str, Any]) -> bool:
    return any(options.get(name) is not None for name in SSL_OPTION_NAMES) or any(
        options.get(name) for name in SSL_FLAG_NAMES
    )


def ssl_params_from_options(options: Mapping[str, Any]) -> SslParams:
    def pick(name: str, default: Any) -> Any:
        value: Any = options.get(name)
        return default if value is None else value

    base = SslParams(
        c4=pick("c4", DEFAULT_C4),
        beta=pick("beta", DEFAULT_BETA),
        lam=pick("lam", DEFAULT_LAMBDA),
        ohem_enabled=not options.get("no_ohem", False),
        reweight_enabled=not options.get("no_reweight", False),
    )
    return base.with_window(pick("k", DEFAULT_WINDOW_SIZE), pick("sigma", DEFAULT_SIGMA))


def write_key_values(stream: TextIO, values: Mapping[str, Any]) -> None:
    for key, value in values.items():
        stream.write(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")


def write_manifest(directory: Path, entries: Dict[str, str]) -> Path:
    """Plain `key value` lines naming each artifact written into `directory`."""
    path: Path = directory / "manifest.txt"
    path.write_text("".join(f"{key} {value}\n" for key, value in entries.items()), encoding="utf-8")
    return path
