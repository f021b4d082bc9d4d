import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .protocol import EvalReport

logger = logging.getLogger(__name__)

CSV_FIELDS = ["corpus", "eps_hat", "column", "psnr_mean", "psnr_std"]


def format_psnr(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.4f}"


def _json_value(value: float) -> Optional[float]:
    return None if not math.isfinite(value) else value


def write_csv(report: EvalReport, path: Union[str, Path]) -> Path:
    """CSV with one line per row; a ``section`` column is added when the report has sections."""
    path = Path(path)
    sectioned = any(row.section is not None for row in report.rows)
    fields = CSV_FIELDS + (["section"] if sectioned else [])
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(fields)
        for row in report.rows:
            line = [row.corpus, row.eps_hat, row.column, format_psnr(row.psnr_mean), format_psnr(row.psnr_std)]
            if sectioned:
                line.append(row.section or "")
            writer.writerow(line)
    logger.info(f"Wrote report {path} ({len(report.rows)} rows)")
    return path


def report_json(report: EvalReport, metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """JSON mirror of the report; infinite PSNR becomes null with ``exact`` set."""
    rows = []
    for row in report.rows:
        data = row.to_dict()
        data["psnr_mean"] = _json_value(row.psnr_mean)
        data["psnr_std"] = _json_value(row.psnr_std)
        data["exact"] = row.exact
        rows.append(data)
    payload = {"rows": rows}
    if metadata:
        payload["metadata"] = metadata
    return payload


def write_json(report: EvalReport, path: Union[str, Path], metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report_json(report, metadata), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path
