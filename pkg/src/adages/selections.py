"""Plain-text selections files and the JSON form of an aggregation result.

One line per machine::

    machine_id<TAB>d<TAB>comma-separated indices

An empty index list is allowed. Blank lines and lines starting with ``#``
are skipped.
"""

from __future__ import annotations

from pathlib import Path

from .aggregation import (
    AggregationError,
    AggregationOutcome,
    DimensionError,
    SelectionSet,
    aggregate,
)

__all__ = [
    "parse_indices",
    "parse_selections",
    "format_selections",
    "read_selections",
    "write_selections",
    "result_payload",
    "aggregate_file",
]


def parse_indices(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(tok) for tok in text.split(",")]
    except ValueError:
        raise AggregationError(f"bad index list {text!r}") from None


def parse_selections(text: str) -> dict[int, SelectionSet]:
    """Parse a selections file body into ``{machine_id: SelectionSet}``.

    All lines must agree on ``d`` and machine ids must be unique.
    """
    out: dict[int, SelectionSet] = {}
    d = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) == 2:
            parts.append("")
        if len(parts) != 3:
            raise AggregationError(f"line {lineno}: expected 3 tab-separated fields")
        try:
            mid, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise AggregationError(f"line {lineno}: machine id and d must be integers") from None
        if d is None:
            d = dim
        elif dim != d:
            raise DimensionError(f"line {lineno}: d={dim} disagrees with d={d}")
        if mid in out:
            raise AggregationError(f"line {lineno}: duplicate machine id {mid}")
        out[mid] = SelectionSet(dim, frozenset(parse_indices(parts[2])))
    if not out:
        raise AggregationError("selections file has no machines")
    return out


def format_selections(machines: dict[int, SelectionSet]) -> str:
    lines = []
    for mid in sorted(machines):
        s = machines[mid]
        lines.append(f"{mid}\t{s.d}\t{','.join(map(str, s.sorted()))}")
    return "\n".join(lines) + "\n"


def read_selections(path) -> dict[int, SelectionSet]:
    return parse_selections(Path(path).read_text())


def write_selections(path, machines: dict[int, SelectionSet]):
    Path(path).write_text(format_selections(machines))


def result_payload(outcome: AggregationOutcome, machines: dict[int, SelectionSet]) -> dict:
    """JSON-ready summary shared by the offline command and the service."""
    return {
        "rule": str(outcome.rule),
        "threshold_used": outcome.threshold_used,
        "c0": outcome.c0,
        "selected": outcome.selected.sorted(),
        "machine_sizes": {str(mid): machines[mid].size() for mid in sorted(machines)},
    }


def aggregate_file(path, rule="adages") -> dict:
    machines = read_selections(path)
    out = aggregate([machines[m] for m in sorted(machines)], rule)
    return result_payload(out, machines)
