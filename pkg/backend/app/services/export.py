"""
Table / document emitters shared by the CLI and the API.

CSV dialect: comma separated, '.' decimal point, header row, '#' comment
lines first (artifact version and the resolved configuration).
"""
import io
import json
import logging
from typing import Dict, Iterable, List, Optional, TextIO, Union

import pandas as pd

from ..core.config import ARTIFACT_NAME, ARTIFACT_VERSION

logger = logging.getLogger(__name__)

Rows = Union[pd.DataFrame, Iterable[Dict]]


def header_lines(resolved: Dict) -> List[str]:
    return [
        f"# {ARTIFACT_NAME} {ARTIFACT_VERSION}",
        "# config: " + json.dumps(resolved, sort_keys=True, default=str),
    ]


def to_frame(rows: Rows, columns: Optional[List[str]] = None) -> pd.DataFrame:
    if isinstance(rows, pd.DataFrame):
        return rows
    return pd.DataFrame(list(rows), columns=columns)


def render_csv(tables: Dict[str, Rows], resolved: Dict) -> str:
    """One or more tables; with several tables each gets a '# table: name' line."""
    buf = io.StringIO()
    for line in header_lines(resolved):
        buf.write(line + "\n")
    for name, rows in tables.items():
        if len(tables) > 1:
            buf.write(f"# table: {name}\n")
        to_frame(rows).to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue()


def render_document(tables: Dict[str, Rows], resolved: Dict) -> str:
    doc = {
        "artifact": ARTIFACT_NAME,
        "version": ARTIFACT_VERSION,
        "config": resolved,
    }
    for name, rows in tables.items():
        doc[name] = to_frame(rows).to_dict(orient="records")
    return json.dumps(doc, indent=1, default=str) + "\n"


def render(tables: Dict[str, Rows], resolved: Dict, fmt: str = "csv") -> str:
    if fmt == "structured-text":
        return render_document(tables, resolved)
    return render_csv(tables, resolved)


def write_output(text: str, out: Optional[str], stream: TextIO):
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
        logger.info(f"wrote {out}")
    else:
        stream.write(text)


def read_table(text_or_path: str) -> pd.DataFrame:
    """Read back a table written by render_csv (first table only)."""
    source = io.StringIO(text_or_path) if "\n" in text_or_path else text_or_path
    return pd.read_csv(source, comment="#")
