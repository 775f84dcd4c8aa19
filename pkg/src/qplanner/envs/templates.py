"""Prompt templates, one per task kind, loaded from a UTF-8 JSON file.

Keys are task-kind names; MRC kinds also carry a ``<kind>.final`` entry for
the last step, where the question finally gets answered. Placeholders:
``{task} {context} {results} {requirements} {action} {question}``.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

from qplanner.errors import MissingTemplate

PLACEHOLDERS = ("task", "context", "results", "requirements", "action", "question")


def load_templates(path: Optional[str | Path] = None) -> dict[str, str]:
    if path is None:
        text = resources.files("qplanner.envs").joinpath("default_templates.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
        raise ValueError("template file must map keys to template strings")
    return data


def render(templates: Mapping[str, str], key: str, kind, **slots: str) -> str:
    try:
        template = templates[key]
    except KeyError:
        raise MissingTemplate(kind) from None
    values = {name: "" for name in PLACEHOLDERS}
    values.update(slots)
    return template.format_map(values)
