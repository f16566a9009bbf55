"""Writing metric reports to JSON and CSV."""

import csv
import json
import logging
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

from .metrics import NOT_APPLICABLE, ConfusionMatrix, MetricsReport

logger = logging.getLogger(__name__)


def _cell(value: Any) -> Any:
    return NOT_APPLICABLE if value is None else value


def write_report_json(
    report: MetricsReport | Mapping[str, Any], path: str | Path
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = report.to_dict() if isinstance(report, MetricsReport) else dict(report)
    path.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")
    return path


def _write_rows(path: Path, header: list[str], rows: Iterable[list[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows([_cell(v) for v in row] for row in rows)


def _write_confusion(path: Path, matrix: ConfusionMatrix) -> None:
    _write_rows(
        path,
        ["gold", *matrix.columns],
        ([row, *(matrix.count(row, c) for c in matrix.columns)] for row in matrix.rows),
    )


def write_report_csv(report: MetricsReport, directory: str | Path) -> list[Path]:
    """
    Write one CSV per table of ``report`` into ``directory``.

    Files: metrics.csv, per_action.csv, per_turn.csv, and when present
    action_confusion.csv, flow_confusion.csv, flow_source.csv, exposure.csv.

    Returns:
        Paths written
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    path = directory / "metrics.csv"
    scalars = {
        **report.scalars(),
        "lev_excluded_dialogues": report.lev_excluded_dialogues,
        "num_records": report.num_records,
        "num_action_turns": report.num_action_turns,
    }
    _write_rows(path, ["metric", "value"], ([k, v] for k, v in scalars.items()))
    written.append(path)

    path = directory / "per_action.csv"
    rows = ([k, v] for k, v in report.per_action.items())
    _write_rows(path, ["action", "accuracy"], rows)
    written.append(path)

    path = directory / "per_turn.csv"
    _write_rows(
        path,
        ["ordinal", "flow", "flow_prefix", "count"],
        ([k, t.flow, t.flow_prefix, t.count] for k, t in report.per_turn.items()),
    )
    written.append(path)

    for name in ("action_confusion", "flow_confusion"):
        matrix = getattr(report, name)
        if matrix is not None:
            path = directory / f"{name}.csv"
            _write_confusion(path, matrix)
            written.append(path)

    if report.flow_source is not None:
        path = directory / "flow_source.csv"
        source = report.flow_source
        _write_rows(
            path,
            ["source", "percent"],
            [
                ["train", source.train],
                ["test_only", source.test_only],
                ["neither", source.neither],
            ],
        )
        written.append(path)

    if report.exposure is not None:
        path = directory / "exposure.csv"
        exposure = report.exposure
        _write_rows(
            path,
            ["bucket", "accuracy", "count"],
            (
                [bucket, accuracy, exposure.counts[bucket]]
                for bucket, accuracy in exposure.accuracy.items()
            ),
        )
        written.append(path)

    logger.info("Wrote %d report tables to %s", len(written), directory)
    return written


def read_report_json(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))
