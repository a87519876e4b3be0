"""Writers for JSON/CSV artifacts and rendered Markdown summaries."""
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Union

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader

from .. import __version__

TEMPLATE_DIR = Path(__file__).resolve().parents[1] / "templates"
RESOLVED_CONFIG = "resolved_config.json"


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def output_dir(path: Union[str, Path]) -> Path:
    out = Path(path).expanduser()
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=_to_builtin))
    return path


def read_json(path: Union[str, Path]) -> Any:
    return json.loads(Path(path).read_text())


def write_frame(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def write_resolved_config(out_dir: Path, command: str, settings: Mapping[str, Any]) -> Path:
    """Snapshot of everything needed to rerun `command`."""
    payload: Dict[str, Any] = {"command": command, "version": __version__, "settings": dict(settings)}
    return write_json(out_dir / RESOLVED_CONFIG, payload)


def render_summary(template_name: str, out_path: Union[str, Path], **context: Any) -> Path:
    env = Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), trim_blocks=True, lstrip_blocks=True)
    content = env.get_template(template_name).render(**context)
    out_path = Path(out_path)
    out_path.write_text(content)
    return out_path
