import functools
import json
import logging
import sys
import traceback
from typing import Callable
from pydantic import ValidationError
from app.helpers.Exceptions import LabError

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _error_body(e: Exception) -> str:
    return json.dumps({"data": None, "error": str(e), "success": False})


def handle_command_errors(command: Callable[..., int]) -> Callable[..., int]:
    """Map exceptions escaping a CLI command to an exit code and a JSON error body on stderr."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs) -> int:
        try:
            return command(*args, **kwargs)
        except (LabError, ValidationError, FileNotFoundError, json.JSONDecodeError) as e:
            logger.error(f"{command.__name__} rejected its input: {e}")
            print(_error_body(e), file=sys.stderr)
            return EXIT_USAGE
        except Exception as e:
            logger.error(f"Unhandled exception in {command.__name__}: {e}")
            traceback.print_exc()
            print(_error_body(e), file=sys.stderr)
            return EXIT_FAIL

    return wrapper
