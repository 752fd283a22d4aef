"""
JSON reports written by the prediction commands, and their export to
delimiter-separated tables.
"""

import json
import logging
from pathlib import Path

import pandas as pd

from common.errors import ToolkitError
from predictor.prediction import Prediction, export_frame
from tensor.prediction import RANKING_COLUMNS

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
PREDICTION_KINDS = ('predict', 'rank', 'blocksize')
TENSOR_KINDS = ('tensor-predict',)


class ReportFormatError(ToolkitError):
    """Raised for report files that cannot be read"""
    pass


def build_report(kind, setup, predictions=None, rows=None, **extra):
    """
    Report payload

    Args:
        kind: One of PREDICTION_KINDS or TENSOR_KINDS
        setup: Machine, backend, threads and seed of the run
        predictions: Predictions (blocked-algorithm kinds)
        rows: Ranking rows (tensor kinds)
        extra: Further top-level fields, e.g. the predicted block size
    """
    if kind not in PREDICTION_KINDS + TENSOR_KINDS:
        raise ReportFormatError(f"Unknown report kind {kind}")
    report = {'report_version': REPORT_VERSION, 'kind': kind, 'setup': dict(setup)}
    if kind in PREDICTION_KINDS:
        report['predictions'] = [prediction.as_dict() for prediction in predictions or []]
    else:
        report['rows'] = [dict(row) for row in rows or []]
    report.update(extra)
    return report


def write_report(report, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + '\n')
    logger.info(f"Wrote {report['kind']} report to {path}")
    return path


def load_report(path):
    try:
        report = json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise ReportFormatError(f"Cannot read report {path}: {str(e)}")
    if report.get('report_version') != REPORT_VERSION:
        raise ReportFormatError(f"Unsupported report version {report.get('report_version')}")
    if report.get('kind') not in PREDICTION_KINDS + TENSOR_KINDS:
        raise ReportFormatError(f"Unknown report kind {report.get('kind')}")
    return report


def report_frame(report):
    """Table of a report: one row per prediction and statistic, or per ranked algorithm"""
    if report['kind'] in TENSOR_KINDS:
        return pd.DataFrame(report['rows'], columns=RANKING_COLUMNS)
    try:
        predictions = [Prediction.from_dict(data) for data in report['predictions']]
    except (KeyError, TypeError, ValueError) as e:
        raise ReportFormatError(f"Malformed prediction in report: {str(e)}")
    return export_frame(predictions)


def export_report(report, path, sep=','):
    """Write a report's table; returns the frame written"""
    frame = report_frame(report)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, sep=sep, index=False)
    logger.info(f"Exported {len(frame)} row(s) to {path}")
    return frame


def read_report(path, sep=','):
    """Read back a table written by export_report"""
    try:
        return pd.read_csv(path, sep=sep)
    except (OSError, ValueError) as e:
        raise ReportFormatError(f"Cannot read table {path}: {str(e)}")
