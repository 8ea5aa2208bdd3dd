"""CSV ingestion and emission for the corpus channels.

Three tabular formats share a layout: a `study_id` column plus one column
per canonical condition. Report labels use the numeric convention of the
public chest X-ray label distributions (1.0 positive, 0.0 negative, -1.0
uncertain, empty blank); image truth uses 1/0 with no blanks; probability
files carry reals in [0, 1]. Impressions live in a two-column
(study_id, impression) file. Errors name the offending row and column.
"""

from __future__ import annotations

import csv
import math
from typing import Sequence

from .labels import (
    CONDITIONS,
    Corpus,
    ReportLabel,
    Study,
    check_no_finding_alphabet,
)


class IngestError(ValueError):
    """A cell or header failed validation during ingestion."""


_REPORT_CODES = {1.0: ReportLabel.POSITIVE, 0.0: ReportLabel.NEGATIVE, -1.0: ReportLabel.UNCERTAIN}
_REPORT_CELLS = {
    ReportLabel.POSITIVE: "1.0",
    ReportLabel.NEGATIVE: "0.0",
    ReportLabel.UNCERTAIN: "-1.0",
    ReportLabel.BLANK: "",
}


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        rows = [row for row in reader]
    return header, rows


def _condition_columns(path, header: list[str]) -> dict[str, int]:
    if "study_id" not in header:
        raise IngestError(f"{path}: missing study_id column")
    positions = {}
    for i, name in enumerate(header):
        if name == "study_id":
            continue
        if name not in CONDITIONS:
            raise IngestError(f"{path}: unknown column {name!r}")
        if name in positions:
            raise IngestError(f"{path}: duplicate column {name!r}")
        positions[name] = i
    missing = [c for c in CONDITIONS if c not in positions]
    if missing:
        raise IngestError(f"{path}: missing condition columns {missing}")
    return positions


def _cell(row: list[str], col: int, path, row_number: int, column: str) -> str:
    if col >= len(row):
        raise IngestError(f"{path}: row {row_number} is short a value for column {column!r}")
    return row[col].strip()


def ingest_report_labels(path) -> Corpus:
    """Read a 4-class report-label file into a corpus.

    Out-of-alphabet "No Finding" labels are kept but trigger a warning.
    """
    header, rows = _read_rows(path)
    positions = _condition_columns(path, header)
    id_col = header.index("study_id")
    studies = []
    for r, row in enumerate(rows, start=2):
        labels = []
        for condition in CONDITIONS:
            cell = _cell(row, positions[condition], path, r, condition)
            if cell == "":
                labels.append(ReportLabel.BLANK)
                continue
            try:
                code = float(cell)
            except ValueError:
                code = None
            if code not in _REPORT_CODES:
                raise IngestError(
                    f"{path}: row {r}, column {condition!r}: bad report label {cell!r}"
                )
            labels.append(_REPORT_CODES[code])
        studies.append(Study(id=row[id_col].strip(), report_labels=tuple(labels)))
    corpus = Corpus(studies=tuple(studies), provenance=str(path))
    check_no_finding_alphabet(corpus, source=str(path))
    return corpus


def ingest_image_truth(path) -> Corpus:
    """Read a binary image-truth file; blanks are not allowed."""
    header, rows = _read_rows(path)
    positions = _condition_columns(path, header)
    id_col = header.index("study_id")
    studies = []
    for r, row in enumerate(rows, start=2):
        truth = []
        for condition in CONDITIONS:
            cell = _cell(row, positions[condition], path, r, condition)
            if cell == "":
                raise IngestError(f"{path}: row {r}, column {condition!r}: empty truth cell")
            try:
                value = float(cell)
            except ValueError:
                value = None
            if value not in (0.0, 1.0):
                raise IngestError(
                    f"{path}: row {r}, column {condition!r}: bad truth label {cell!r}"
                )
            truth.append(int(value))
        studies.append(Study(id=row[id_col].strip(), image_truth=tuple(truth)))
    return Corpus(studies=tuple(studies), provenance=str(path))


def ingest_probabilities(path) -> Corpus:
    """Read per-condition probabilities; every cell must be a real in [0, 1]."""
    header, rows = _read_rows(path)
    positions = _condition_columns(path, header)
    id_col = header.index("study_id")
    studies = []
    for r, row in enumerate(rows, start=2):
        probs = []
        for condition in CONDITIONS:
            cell = _cell(row, positions[condition], path, r, condition)
            try:
                value = float(cell)
            except ValueError:
                raise IngestError(
                    f"{path}: row {r}, column {condition!r}: unparseable probability {cell!r}"
                ) from None
            if not math.isfinite(value) or not 0.0 <= value <= 1.0:
                raise IngestError(
                    f"{path}: row {r}, column {condition!r}: probability {cell!r} outside [0, 1]"
                )
            probs.append(value)
        studies.append(Study(id=row[id_col].strip(), probabilities=tuple(probs)))
    return Corpus(studies=tuple(studies), provenance=str(path))


def ingest_impressions(path) -> Corpus:
    """Read (study_id, impression) rows."""
    header, rows = _read_rows(path)
    if header[:2] != ["study_id", "impression"]:
        raise IngestError(f"{path}: expected header study_id,impression")
    studies = []
    for r, row in enumerate(rows, start=2):
        if len(row) < 2:
            raise IngestError(f"{path}: row {r}: missing impression cell")
        studies.append(Study(id=row[0].strip(), impression=row[1]))
    return Corpus(studies=tuple(studies), provenance=str(path))


def _write_table(path, header: Sequence[str], rows) -> None:
    if hasattr(path, "write"):
        writer = csv.writer(path, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def write_report_labels(corpus: Corpus, path) -> None:
    corpus.require_channel("report_labels")
    _write_table(
        path,
        ["study_id", *CONDITIONS],
        (
            [s.id, *(_REPORT_CELLS[label] for label in s.report_labels)]
            for s in corpus.studies
        ),
    )


def write_image_truth(corpus: Corpus, path) -> None:
    corpus.require_channel("image_truth")
    _write_table(
        path,
        ["study_id", *CONDITIONS],
        ([s.id, *(str(v) for v in s.image_truth)] for s in corpus.studies),
    )


def write_probabilities(corpus: Corpus, path) -> None:
    corpus.require_channel("probabilities")
    _write_table(
        path,
        ["study_id", *CONDITIONS],
        ([s.id, *(repr(v) for v in s.probabilities)] for s in corpus.studies),
    )


def write_impressions(corpus: Corpus, path) -> None:
    corpus.require_channel("impression")
    _write_table(
        path,
        ["study_id", "impression"],
        ([s.id, s.impression] for s in corpus.studies),
    )


def write_binary_predictions(ids: Sequence[str], predictions, path) -> None:
    """Emit binary predictions in the image-truth file format."""
    _write_table(
        path,
        ["study_id", *CONDITIONS],
        ([sid, *(str(int(v)) for v in row)] for sid, row in zip(ids, predictions)),
    )


def write_probability_predictions(ids: Sequence[str], probabilities, path) -> None:
    """Emit probabilities in the probability file format."""
    _write_table(
        path,
        ["study_id", *CONDITIONS],
        ([sid, *(repr(float(v)) for v in row)] for sid, row in zip(ids, probabilities)),
    )
