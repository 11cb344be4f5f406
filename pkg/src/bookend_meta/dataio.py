"""Reading and writing the delimited arm-level data format.

One row per study arm: ``study,treatment,events,n`` with treatment coded
1 = control, 2 = active. Row order is preserved in the resulting Dataset.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .core import ArmData, DataError, Dataset, Treatment

HEADER = ["study", "treatment", "events", "n"]


def ingest(path: str | Path) -> Dataset:
    """Parse and validate a dataset file; errors carry 1-based line numbers."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    rows = [(i, row) for i, row in enumerate(rows, start=1) if any(f.strip() for f in row)]
    if not rows:
        raise DataError(f"{path}: no studies")
    first_line, header = rows[0]
    if [h.strip().lower() for h in header] != HEADER:
        raise DataError(
            f"{path}:{first_line}: expected header '{','.join(HEADER)}', got {','.join(header)!r}"
        )
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no studies")

    arms: list[ArmData] = []
    seen: set[tuple[str, int]] = set()
    for lineno, row in body:
        if len(row) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        study = row[0].strip()
        if not study:
            raise DataError(f"{path}:{lineno}: empty study id")
        try:
            treatment = int(row[1])
            events = int(row[2])
            n = int(row[3])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: malformed integer field ({exc})") from None
        if treatment not in (1, 2):
            raise DataError(f"{path}:{lineno}: treatment must be 1 (control) or 2 (active)")
        if events < 0 or n < 0:
            raise DataError(f"{path}:{lineno}: negative count")
        if events > n:
            raise DataError(f"{path}:{lineno}: events ({events}) exceed n ({n})")
        if (study, treatment) in seen:
            raise DataError(f"{path}:{lineno}: duplicate arm for study {study!r} treatment {treatment}")
        seen.add((study, treatment))
        arms.append(ArmData(study, Treatment(treatment), events, n))

    try:
        return Dataset(arms=tuple(arms))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def emit(data: Dataset, path: str | Path) -> Path:
    """Write a Dataset back to the delimited format (arm order preserved)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for arm in data.arms:
            writer.writerow([arm.study_id, arm.treatment.value, arm.events, arm.size])
    return path
