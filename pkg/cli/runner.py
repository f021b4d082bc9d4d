import logging
import os
import sys
from typing import Optional, Sequence

logger = logging.getLogger(__name__)

COMMANDS = ("train", "attack", "eval", "denoise", "sweep", "selftest", "compare")

USAGE = (
    "usage: obsdn {" + ",".join(COMMANDS) + "} [--config FILE] [--key VALUE ...]\n"
    "Run 'obsdn <command> --help' to list every config key with its default.\n"
)


def setup_django() -> None:
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "obsdn.settings")
    from django.apps import apps

    if not apps.ready:
        import django

        django.setup()


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Dispatch ``obsdn <command> ...`` and return the process exit code.

    0 on success, 1 when the command failed at runtime, 2 on usage or
    configuration errors.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in COMMANDS:
        if argv and argv[0] in ("-h", "--help"):
            sys.stdout.write(USAGE)
            return 0
        sys.stderr.write(USAGE)
        if argv:
            sys.stderr.write(f"obsdn: unknown command {argv[0]!r}\n")
        return 2

    setup_django()
    from django.core.management import load_command_class

    name, rest = argv[0], argv[1:]
    command = load_command_class("cli", name)
    logger.debug(f"Running obsdn {name} with {len(rest)} argument(s)")
    try:
        command.run_from_argv(["obsdn", name, *rest])
    except SystemExit as e:
        if e.code is None:
            return 0
        return e.code if isinstance(e.code, int) else 1
    return 0
