"""Base class of the obsdn management commands.

Every option is a flat config key: it can come from ``--config FILE`` or
from the matching ``--flag``, and flags win. Values are validated by the
command's serializer before any work starts.
"""
import logging
from typing import Any, Dict, Mapping

from django.core.management.base import BaseCommand, CommandError
from rest_framework.fields import empty

from attack.exceptions import AttackError
from dataset.exceptions import DatasetError
from denoiser.exceptions import DenoiserError
from evaluation.exceptions import EvaluationError
from projection.exceptions import ProjectionError
from tensorcore.exceptions import TensorCoreError
from training.exceptions import TrainingError

from .artifacts import plain_value
from .config import load_config_file, merge_options
from .exceptions import CliError, ConfigFileError

logger = logging.getLogger(__name__)

CONFIG_ERROR = 2
RUNTIME_ERROR = 1

RUNTIME_ERRORS = (
    TensorCoreError, DenoiserError, DatasetError, ProjectionError, AttackError,
    TrainingError, EvaluationError, CliError, OSError,
)


def flag_name(key: str) -> str:
    return "--" + key.replace("_", "-")


def field_help(field) -> str:
    text = str(field.help_text or "")
    if field.default is empty:
        text = f"{text} (required)"
    elif field.default is None:
        text = f"{text} (default: unset)"
    else:
        text = f"{text} (default: {plain_value(field.default)})"
    # argparse %-formats help strings
    return text.replace("%", "%%")


def format_errors(errors: Mapping[str, Any]) -> str:
    """One ``key: message`` clause per offending key."""
    parts = []
    for key, messages in errors.items():
        if isinstance(messages, (list, tuple)):
            text = " ".join(str(message) for message in messages)
        else:
            text = str(messages)
        parts.append(f"{key}: {text}")
    return "Invalid configuration: " + "; ".join(parts)


class ConfigCommand(BaseCommand):
    serializer_class = None
    requires_system_checks = []

    def config_fields(self):
        return self.serializer_class().fields

    def add_arguments(self, parser):
        parser.add_argument("--config", help="key=value run configuration file; flags override its values")
        for key, field in self.config_fields().items():
            parser.add_argument(flag_name(key), dest=key, default=None, metavar=key.upper(), help=field_help(field))

    def load_options(self, options: Mapping[str, Any]) -> Dict[str, Any]:
        """Merge the config file with the given flags and validate the result."""
        try:
            file_values = load_config_file(options["config"]) if options.get("config") else {}
        except ConfigFileError as e:
            raise CommandError(f"{e.key or 'config'}: {e}", returncode=CONFIG_ERROR)
        overrides = {key: options.get(key) for key in self.config_fields()}
        serializer = self.serializer_class(data=merge_options(file_values, overrides))
        if not serializer.is_valid():
            raise CommandError(format_errors(serializer.errors), returncode=CONFIG_ERROR)
        return serializer.validated_data

    def handle(self, *args, **options):
        data = self.load_options(options)
        try:
            self.run(data)
        except RUNTIME_ERRORS as e:
            logger.exception(f"{self.command_name} failed: {str(e)}")
            raise CommandError(f"{self.command_name} failed: {e}", returncode=RUNTIME_ERROR)

    @property
    def command_name(self) -> str:
        return self.__class__.__module__.rsplit(".", 1)[-1]

    def run(self, data: Dict[str, Any]) -> None:
        raise NotImplementedError("Subclasses must implement run()")
