#!/usr/bin/env python3
import json
from pathlib import Path

from jinja2 import Environment, FileSystemLoader, StrictUndefined, select_autoescape


def _fmt(value, digits=4):
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return "" if value is None else str(value)


def render(template_path: Path, data_path: Path, out_path: Path):
    """Renderiza la plantilla HTML con los datos del JSON del reporte."""
    env = Environment(
        loader=FileSystemLoader(str(template_path.parent)),
        autoescape=select_autoescape(["html"]),
        undefined=StrictUndefined,
        keep_trailing_newline=True,
    )
    env.filters["fmt"] = _fmt
    template = env.get_template(template_path.name)
    data = json.loads(data_path.read_text(encoding="utf-8"))

    html = template.render(**data)
    out_path.write_text(html, encoding="utf-8")
    return out_path
