"""
Bench reports: the JSON document a scenario run produces, plus CSV flattening.
"""
import csv
import io
import json
import logging
import os
from typing import Any, Dict, List, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import BenchError
from .kpi import KpiThresholds, kpi_check
from .stats import ProbeStats

logger = logging.getLogger(__name__)

FORMAT_VERSION = "sliceguard-report/1"
CSV_COLUMNS = ("interface", "metric", "slice", "count", "min", "mean", "max", "mdev", "unit", "excluded")


class BenchReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    format_version: str = FORMAT_VERSION
    scenario: str
    config: Dict[str, Any] = Field(default_factory=dict)
    stats: List[ProbeStats] = Field(default_factory=list)
    isolation: Dict[str, Dict[str, int]] = Field(default_factory=dict)
    thresholds: KpiThresholds = Field(default_factory=KpiThresholds)
    verdicts: Dict[str, str] = Field(default_factory=dict)

    def recompute_verdicts(self) -> Dict[str, str]:
        return kpi_check(self.stats, self.thresholds)

    def find(self, interface: str, metric: str, slice_name: Union[str, None] = None) -> ProbeStats:
        for stats in self.stats:
            if stats.interface == interface and stats.metric == metric and stats.slice == slice_name:
                return stats
        raise KeyError(f"no {metric} statistics for {interface} ({slice_name or 'no slice'})")


def to_json(report: BenchReport) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def to_csv(report: BenchReport) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for stats in report.stats:
        row = stats.model_dump()
        writer.writerow({column: "" if row[column] is None else row[column] for column in CSV_COLUMNS})
    return buffer.getvalue()


def export(report: BenchReport, path: Union[str, os.PathLike], fmt: Literal["json", "csv"] = "json") -> str:
    """Write the report to path. Returns the path written."""
    if fmt == "json":
        text = to_json(report)
    elif fmt == "csv":
        text = to_csv(report)
    else:
        raise BenchError(f"unknown report format '{fmt}'")
    try:
        with open(path, "w", newline="") as f:
            f.write(text)
    except OSError as e:
        raise BenchError(f"cannot write report to {path}: {e.strerror}") from e
    logger.info(f"Report for {report.scenario} written to {path} ({fmt})")
    return str(path)


def load_report(path: Union[str, os.PathLike]) -> BenchReport:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise BenchError(f"cannot read report {path}: {e.strerror}") from e
    try:
        report = BenchReport.model_validate_json(text)
    except ValidationError as e:
        raise BenchError(f"{path} is not a bench report: {e.error_count()} error(s)") from e
    if report.format_version != FORMAT_VERSION:
        raise BenchError(f"{path}: unsupported report format '{report.format_version}'")
    return report
