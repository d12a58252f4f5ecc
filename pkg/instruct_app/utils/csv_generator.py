"""
CSV writers for run artifacts: metrics trails, oracle reports and sample sets.
"""

import csv
from dataclasses import asdict, is_dataclass
from io import StringIO
from pathlib import Path
from typing import Any, Dict, Iterable, List

import numpy as np

from ..exceptions import ShapeMismatchError
from .checkpoints import write_atomic


def format_value(value) -> str:
    """Empty for missing values, shortest round-trip text for floats."""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class RunCSVGenerator:
    """
    Collects rows for one CSV artifact. Subclasses set HEADERS.
    """

    HEADERS: List[str] = []

    def __init__(self):
        self.rows = []

    def add_row(self, row: Dict[str, Any]) -> None:
        unknown = set(row) - set(self.HEADERS)
        if unknown:
            raise ValueError(f"Unknown CSV columns: {', '.join(sorted(unknown))}")
        self.rows.append({key: format_value(row.get(key)) for key in self.HEADERS})

    def generate_csv_content(self) -> str:
        """
        Generate CSV content as a string.

        Returns:
            CSV content as string
        """
        output = StringIO()
        writer = csv.DictWriter(output, fieldnames=self.HEADERS, lineterminator='\n')
        writer.writeheader()
        writer.writerows(self.rows)
        return output.getvalue()

    def save_to_file(self, filepath) -> Path:
        """
        Save CSV content to a file (atomically).

        Args:
            filepath: Path where to save the CSV file
        """
        return write_atomic(filepath, self.generate_csv_content())


class MetricsCSVGenerator(RunCSVGenerator):
    """One row per logging interval of a training run."""

    HEADERS = [
        'iteration',
        'dsm_loss',
        'instruct_grad_norm',
        'ikl_estimate',
        'energy_distance',
        'wall_seconds',
    ]

    def add_record(self, record) -> None:
        self.add_row(asdict(record) if is_dataclass(record) else dict(record))

    def add_records(self, records: Iterable) -> None:
        for record in records:
            self.add_record(record)


class OracleCSVGenerator(RunCSVGenerator):
    """One row per analytic check."""

    HEADERS = ['check', 'expected', 'observed', 'tolerance', 'status']

    def add_result(self, result) -> None:
        self.add_row(asdict(result) if is_dataclass(result) else dict(result))


def save_metrics_csv(records: Iterable, filepath) -> Path:
    """
    Convenience function writing a metrics trail.

    Args:
        records: MetricsRecord instances (or dicts with the same keys)
        filepath: Destination CSV
    """
    generator = MetricsCSVGenerator()
    generator.add_records(records)
    return generator.save_to_file(filepath)


def read_metrics_csv(filepath) -> List[Dict[str, str]]:
    with open(filepath, newline='', encoding='utf-8') as csvfile:
        return list(csv.DictReader(csvfile))


def samples_csv_content(samples) -> str:
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    output = StringIO()
    writer = csv.writer(output, lineterminator='\n')
    writer.writerow([f'x{i}' for i in range(samples.shape[1])])
    writer.writerows([[repr(float(v)) for v in row] for row in samples])
    return output.getvalue()


def save_samples_csv(samples, filepath) -> Path:
    return write_atomic(filepath, samples_csv_content(samples))


def load_samples_csv(filepath) -> np.ndarray:
    with open(filepath, newline='', encoding='utf-8') as csvfile:
        reader = csv.reader(csvfile)
        header = next(reader, None)
        if not header:
            raise ValueError(f"{filepath} has no header row")
        rows = [row for row in reader if row]
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ShapeMismatchError(f"{filepath}: line {lineno} has {len(row)} values for {len(header)} columns")
    return np.array([[float(v) for v in row] for row in rows], dtype=np.float64).reshape(len(rows), len(header))
