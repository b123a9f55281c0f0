"""Report envelopes: machine JSON plus aligned-column text tables.

Every report embeds the artifact version, the fingerprint of the resolved
run configuration, and a content hash per input file, so a report is a
pure function of (inputs, config, seeds) and reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json

from . import __version__


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_fingerprint(config: dict) -> str:
    payload = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def report_metadata(command: str, config: dict, inputs: dict[str, str]) -> dict:
    """inputs maps a logical name to a file path."""
    return {
        "artifact_version": __version__,
        "command": command,
        "config": config,
        "config_fingerprint": config_fingerprint(config),
        "inputs": {
            name: {"path": str(path), "sha256": file_sha256(path)}
            for name, path in sorted(inputs.items())
        },
    }


def write_json_report(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")


def render_table(headers: list[str], rows: list[list], title: str = "") -> str:
    """Aligned fixed-width text table; floats render with three decimals."""

    def fmt(cell) -> str:
        if isinstance(cell, float):
            return f"{cell:.3f}"
        if cell is None:
            return "-"
        return str(cell)

    str_rows = [[fmt(c) for c in row] for row in rows]
    widths = [
        max(len(headers[j]), *(len(r[j]) for r in str_rows)) if str_rows else len(headers[j])
        for j in range(len(headers))
    ]
    lines = []
    if title:
        lines.append(title)
    lines.append("  ".join(h.ljust(widths[j]) for j, h in enumerate(headers)).rstrip())
    lines.append("  ".join("-" * widths[j] for j in range(len(headers))))
    for row in str_rows:
        lines.append("  ".join(row[j].ljust(widths[j]) for j in range(len(row))).rstrip())
    return "\n".join(lines) + "\n"


def write_text_report(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
