"""
Scenario preset loader.

Presets are INI-style files: ``[section]`` headers, ``key = value`` lines and
``#`` comments. Units are part of every key name. Unknown sections or keys
are rejected.
"""

import configparser
import logging
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from ..exceptions import ConfigError
from ..models.schemas import ScenarioConfig

logger = logging.getLogger(__name__)

SECTIONS = ("scenario", "trajectory", "wind", "noise", "estimator", "detector", "acceptance")
FAULT_PREFIX = "fault."
PRESET_SUFFIX = ".ini"


def _parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(
        interpolation=None,
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#",),
        default_section="__unused__",
        strict=True,
    )
    parser.optionxform = str
    return parser


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = _parser()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from e

    data: dict = {"faults": []}
    for section in parser.sections():
        values = dict(parser.items(section))
        if section in SECTIONS:
            data[section] = values
        elif section.startswith(FAULT_PREFIX) and len(section) > len(FAULT_PREFIX):
            data["faults"].append(values)
        else:
            raise ConfigError(f"{source}: unknown section [{section}]")

    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {e}") from e


def load_scenario(path, seed: Optional[int] = None) -> ScenarioConfig:
    """
    Load and validate a preset file.

    Args:
        path: Preset file.
        seed: Optional override of ``[scenario] seed``.

    Raises:
        ConfigError: unreadable file, unknown section/key or invalid value.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read scenario file {path}: {e}") from e

    cfg = parse_scenario(text, source=str(path))
    if seed is not None:
        cfg = cfg.with_seed(seed)
    logger.debug(f"loaded scenario '{cfg.name}' from {path}")
    return cfg


def list_scenarios(directory) -> list[Path]:
    """Preset files directly inside ``directory``, in filename order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"scenario directory {directory} does not exist")
    files = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix == PRESET_SUFFIX)
    if not files:
        raise ConfigError(f"no {PRESET_SUFFIX} presets in {directory}")
    return files
