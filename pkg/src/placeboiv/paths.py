from __future__ import annotations

import re
from pathlib import Path
from typing import Union


PathLike = Union[str, Path]

MANIFEST = "manifest.json"
CURVES = "curves.csv"
RECORDS = "records.csv"
BIAS = "bias.csv"
SUMMARY = "summary.csv"
DESIGN = "design.csv"
STRATIFIED = "stratified_{stratifier}.csv"
CONSISTENCY = "consistency.csv"
COVERAGE = "coverage.csv"
REPORT = "report.csv"

NAME_PATTERN = re.compile(r"[^A-Za-z0-9_.-]+")


def safe_name(name: str) -> str:
    cleaned = NAME_PATTERN.sub("_", name).strip("_")
    if not cleaned:
        raise ValueError(f"'{name}' has no usable characters for a directory name")
    return cleaned


def experiment_dir(out_dir: PathLike, name: str) -> Path:
    return Path(out_dir) / safe_name(name)


def manifest(directory: PathLike) -> Path:
    return Path(directory) / MANIFEST


def curves(directory: PathLike) -> Path:
    return Path(directory) / CURVES


def records(directory: PathLike) -> Path:
    return Path(directory) / RECORDS


def bias(directory: PathLike) -> Path:
    return Path(directory) / BIAS


def summary(directory: PathLike) -> Path:
    return Path(directory) / SUMMARY


def design(directory: PathLike) -> Path:
    return Path(directory) / DESIGN


def stratified(directory: PathLike, stratifier: str) -> Path:
    return Path(directory) / STRATIFIED.format(stratifier=safe_name(stratifier))


def consistency(directory: PathLike) -> Path:
    return Path(directory) / CONSISTENCY


def coverage(directory: PathLike) -> Path:
    return Path(directory) / COVERAGE


def report(directory: PathLike) -> Path:
    return Path(directory) / REPORT


def is_curves(path: PathLike) -> bool:
    return Path(path).name == CURVES


def find_curves(root: PathLike) -> list[Path]:
    """Every curve table under ``root``, sorted for stable report order."""
    return sorted(path for path in Path(root).rglob(CURVES) if is_curves(path))


def sidecar_manifest(output: PathLike) -> Path:
    """Manifest written next to a single output file."""
    output = Path(output)
    return output.with_name(f"{output.stem}.{MANIFEST}")
