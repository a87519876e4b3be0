"""Run configuration loader.

A run config is a JSON or YAML mapping. Before parsing, a `.env` file next to
the config is loaded (existing environment variables win) and
`{{ env_var('NAME') }}` / `{{ env_var('NAME', 'default') }}` markers are
rendered from the environment.
"""
import json
import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml
from dotenv import load_dotenv

from ..errors import ValidationError

logger = logging.getLogger(__name__)

ENV_VAR_PATTERN = re.compile(r"\{\{\s*env_var\(\s*'([^']+)'\s*(?:,\s*'([^']*)')?\s*\)\s*\}\}")
YAML_SUFFIXES = (".yml", ".yaml")


def render_env_vars(text: str) -> str:
    def _replace_env_var(match):
        key = match.group(1)
        default = match.group(2) if match.group(2) is not None else ""
        return os.environ.get(key, default)

    return ENV_VAR_PATTERN.sub(_replace_env_var, text)


def load_run_config(path: Optional[Union[str, Path]]) -> Dict[str, Any]:
    """Load a run config; no path gives an empty mapping."""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    # load_dotenv does not override variables that are already set
    load_dotenv(str(path.parent / ".env"))
    rendered = render_env_vars(path.read_text())
    try:
        if path.suffix.lower() in YAML_SUFFIXES:
            data = yaml.safe_load(rendered) or {}
        else:
            data = json.loads(rendered) if rendered.strip() else {}
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ValidationError(f"could not parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must hold a mapping, got {type(data).__name__}")
    return data


def resolve_settings(
    defaults: Mapping[str, Any],
    file_cfg: Mapping[str, Any],
    section: str,
    overrides: Mapping[str, Any],
) -> Dict[str, Any]:
    """Merge defaults < top-level file keys < the command's file section < explicit flags.

    Flags left at None count as not given.
    """
    settings = dict(defaults)
    settings.update({k: v for k, v in file_cfg.items() if k in defaults})
    block = file_cfg.get(section) or {}
    if not isinstance(block, Mapping):
        raise ValidationError(f"config section '{section}' must be a mapping")
    unknown = sorted(set(block) - set(defaults))
    if unknown:
        logger.warning("ignoring unknown '%s' settings: %s", section, ", ".join(unknown))
    settings.update({k: v for k, v in block.items() if k in defaults})
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return settings
