import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Union

from django.conf import settings

from dataset.noise import NoiseLevel
from obsdn import __version__

from .config import render_config
from .exceptions import CliError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.txt"


def plain_value(value: Any) -> Any:
    """Config value as it would be written in a key=value file."""
    if isinstance(value, NoiseLevel):
        return value.label
    if isinstance(value, (list, tuple)):
        return ",".join(str(plain_value(item)) for item in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return value


def config_snapshot(validated_data: Mapping[str, Any]) -> Dict[str, Any]:
    """Validated options with noise levels and lists turned back into config text."""
    return {
        key: plain_value(value)
        for key, value in sorted(validated_data.items())
        if value is not None
    }


def prepare_out_dir(out: str, command: str) -> Path:
    """Create the run directory; a blank ``out`` means OBSDN_OUTPUT_DIR/<command>."""
    target = Path(out) if out else Path(settings.OBSDN_OUTPUT_DIR) / command
    try:
        target.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"Cannot create output directory {target}: {e}") from e
    logger.info(f"Writing {command} artifacts to {target}")
    return target


def artifact_name(out_dir: Path, path: Union[str, Path]) -> str:
    try:
        return Path(path).resolve().relative_to(out_dir.resolve()).as_posix()
    except ValueError:
        return Path(path).name


def write_manifest(
    out_dir: Union[str, Path],
    command: str,
    config: Mapping[str, Any],
    seed: Optional[int],
    files: Iterable[Union[str, Path]],
) -> Path:
    """Write manifest.json and config.txt for one run.

    The manifest records the command, the full config, the seed, the
    toolkit version and the artifact names; it carries no timestamps so two
    runs of the same config produce the same manifest. ``config.txt``
    replays the run through ``--config``.
    """
    out_dir = Path(out_dir)
    names = [artifact_name(out_dir, f) for f in files]
    config = dict(config)
    config_path = out_dir / CONFIG_NAME
    config_path.write_text(render_config(config, header=f"obsdn {command}"))
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "files": sorted(set(names) | {CONFIG_NAME}),
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.debug(f"Wrote manifest {path} listing {len(manifest['files'])} file(s)")
    return path
