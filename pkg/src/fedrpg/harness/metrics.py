"""Metrics persistence and cross-seed summaries.

A metrics file is one comment header line followed by plain delimited
records ``seed,iteration,trajectories,eval_return,grad_error,agg_norm``.
Floats are written with ``repr`` so a file re-reads into identical records;
only the header carries a timestamp, so identical configurations produce
byte-identical payloads.
"""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import List, Optional, Sequence

from ..errors import ConfigurationError

FORMAT_VERSION = "fedrpg-metrics-v1"
COLUMNS = ("seed", "iteration", "trajectories", "eval_return", "grad_error", "agg_norm")


class SchemaMismatchError(ConfigurationError):
    """Metrics files disagree on their schema; carries the differing tokens."""


@dataclass(frozen=True)
class MetricsRow:
    seed: int
    iteration: int
    trajectories: int
    eval_return: Optional[float]
    grad_error: Optional[float]
    agg_norm: float


@dataclass
class MetricsFile:
    """In-memory form of one metrics file: header fields plus ordered rows."""

    header: dict
    rows: List[MetricsRow]

    def payload_lines(self) -> List[str]:
        return [_format_row(r) for r in self.rows]


def _format_value(value) -> str:
    return "" if value is None else repr(value)


def _format_row(row: MetricsRow) -> str:
    return ",".join([
        str(row.seed), str(row.iteration), str(row.trajectories),
        _format_value(row.eval_return), _format_value(row.grad_error),
        repr(row.agg_norm),
    ])


def _parse_optional(token: str) -> Optional[float]:
    return None if token == "" else float(token)


def header_line(header: dict) -> str:
    tokens = " ".join(f"{k}={v}" for k, v in header.items())
    return f"# {FORMAT_VERSION} {tokens}"


def parse_header(line: str) -> dict:
    if not line.startswith("# "):
        raise ConfigurationError("metrics file must start with a header line")
    parts = line[2:].split()
    if not parts or parts[0] != FORMAT_VERSION:
        raise SchemaMismatchError(
            f"unsupported metrics format {parts[0] if parts else '<empty>'!r}, "
            f"expected {FORMAT_VERSION!r}")
    header = {"format": parts[0]}
    for token in parts[1:]:
        key, _, value = token.partition("=")
        header[key] = value
    return header


def write_metrics(path: str, metrics: MetricsFile):
    """Atomically write header plus rows; no partial file survives a failure."""
    header = dict(metrics.header)
    header.setdefault("created", datetime.now(timezone.utc).isoformat())
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(header_line(header) + "\n")
            for line in metrics.payload_lines():
                fh.write(line + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_metrics(path: str) -> MetricsFile:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ConfigurationError(f"{path}: empty metrics file")
    header = parse_header(lines[0])
    rows = []
    for line in lines[1:]:
        if not line.strip():
            continue
        tokens = line.split(",")
        if len(tokens) != len(COLUMNS):
            raise ConfigurationError(f"{path}: malformed record {line!r}")
        rows.append(MetricsRow(
            seed=int(tokens[0]),
            iteration=int(tokens[1]),
            trajectories=int(tokens[2]),
            eval_return=_parse_optional(tokens[3]),
            grad_error=_parse_optional(tokens[4]),
            agg_norm=float(tokens[5]),
        ))
    return MetricsFile(header=header, rows=rows)


@dataclass(frozen=True)
class SummaryRow:
    variant: str
    attack: str
    iteration: int
    trajectories: int
    mean_return: float
    ci_halfwidth: Optional[float]
    num_seeds: int


def _check_schema(files: Sequence[MetricsFile]):
    formats = {f.header.get("format", "?") for f in files}
    if len(formats) > 1:
        raise SchemaMismatchError(f"metrics files mix formats: {sorted(formats)}")


def summarize(files: Sequence[MetricsFile]) -> List[SummaryRow]:
    """Cross-seed mean and 95% normal-approximation CI of the evaluation returns.

    Rows are grouped by (variant, attack, iteration); the half-width is
    1.96 * sample std / sqrt(num seeds), undefined for a single seed.
    """
    _check_schema(files)
    groups: dict = {}
    for mf in files:
        variant = mf.header.get("variant", "?")
        attack = mf.header.get("attack", "?")
        for row in mf.rows:
            if row.eval_return is None:
                continue
            key = (variant, attack, row.iteration)
            groups.setdefault(key, (row.trajectories, []))[1].append(row.eval_return)
    out = []
    for (variant, attack, iteration), (trajectories, values) in sorted(groups.items()):
        n = len(values)
        mean = sum(values) / n
        if n >= 2:
            var = sum((v - mean) ** 2 for v in values) / (n - 1)
            half = 1.96 * math.sqrt(var / n)
        else:
            half = None
        out.append(SummaryRow(variant=variant, attack=attack, iteration=iteration,
                              trajectories=trajectories, mean_return=mean,
                              ci_halfwidth=half, num_seeds=n))
    return out


def summary_table(rows: Sequence[SummaryRow]) -> str:
    lines = ["variant,attack,iteration,trajectories,mean_return,ci_halfwidth,num_seeds"]
    for r in rows:
        half = "na" if r.ci_halfwidth is None else repr(r.ci_halfwidth)
        lines.append(f"{r.variant},{r.attack},{r.iteration},{r.trajectories},"
                     f"{r.mean_return!r},{half},{r.num_seeds}")
    return "\n".join(lines) + "\n"
