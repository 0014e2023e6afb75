#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Report Generator for oscigeo experiments
Writes JSON reports, CSV tables and plain-text summaries
"""

import io
import os
import csv
import json
import logging
from typing import Any, Dict, List, Optional, Sequence

from constants import VERSION
from utils import atomic_write, to_jsonable

logger = logging.getLogger(__name__)


class ReportGenerator:
    """Writes command reports into an output directory"""

    def __init__(self, output_dir: str):
        """
        Initialize report generator

        Args:
            output_dir: Directory receiving reports and tables
        """
        self.output_dir = output_dir

    def _path(self, name: str) -> str:
        return name if os.path.isabs(name) or os.path.dirname(name) else os.path.join(self.output_dir, name)

    def build_report(self, command: str, config: Dict[str, Any], passed: bool,
                     payload: Dict[str, Any]) -> Dict[str, Any]:
        """
        Assemble a report with the version, command, resolved config and pass flag

        Reports carry no timestamps, so identical runs give identical files.
        """
        report = {'version': VERSION, 'command': command, 'config': config, 'passed': bool(passed)}
        report.update(payload)
        return to_jsonable(report)

    def render_json(self, report: Dict[str, Any]) -> str:
        return json.dumps(to_jsonable(report), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def save_json_report(self, report: Dict[str, Any], output_path: Optional[str] = None) -> str:
        """
        Save report as JSON file

        Args:
            report: Report dictionary
            output_path: Path to save report (default: output_dir/<command>.json)

        Returns:
            Path written
        """
        path = self._path(output_path or f"{report.get('command', 'report')}.json")
        atomic_write(path, self.render_json(report))
        logger.info(f"Saved JSON report to {path}")
        return path

    def save_csv_table(self, header: Sequence[str], rows: List[Sequence[Any]], output_path: str) -> str:
        """
        Save a table as CSV (floats in repr form)

        Args:
            header: Column names
            rows: Table rows
            output_path: Path or file name inside output_dir

        Returns:
            Path written
        """
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in to_jsonable(list(row))])
        path = self._path(output_path)
        atomic_write(path, buffer.getvalue())
        logger.info(f"Saved CSV table ({len(rows)} rows) to {path}")
        return path

    def generate_text_report(self, report: Dict[str, Any]) -> str:
        """
        Generate human-readable text report

        Args:
            report: Report dictionary

        Returns:
            Formatted text report
        """
        lines = []
        lines.append("=" * 60)
        lines.append(f"oscigeo {report.get('version', VERSION)}: {report.get('command', 'report')}")
        lines.append("=" * 60)
        lines.append(f"Result: {'PASS' if report.get('passed') else 'FAIL'}")
        lines.append("")

        for key in ('summary', 'constants', 'passed_checks'):
            section = report.get(key)
            if isinstance(section, dict) and section:
                lines.append(f"{key.replace('_', ' ').capitalize()}:")
                for name, value in sorted(section.items()):
                    lines.append(f"  {name}: {value}")
                lines.append("")

        witness = report.get('witness')
        if witness:
            lines.append("Witness:")
            lines.append("  " + json.dumps(to_jsonable(witness), sort_keys=True))
            lines.append("")

        return "\n".join(lines)

    def save_text_report(self, report: Dict[str, Any], output_path: Optional[str] = None) -> str:
        """
        Save report summary as text file

        Args:
            report: Report dictionary
            output_path: Path to save report (default: output_dir/<command>.txt)

        Returns:
            Path written
        """
        path = self._path(output_path or f"{report.get('command', 'report')}.txt")
        atomic_write(path, self.generate_text_report(report) + "\n")
        logger.info(f"Saved text report to {path}")
        return path
