"""Trajectory CSV input/output and random excitation."""
import csv
import logging
from pathlib import Path
from typing import List, Union

import numpy as np

from control.models import TrajectoryData
from errors import (
    ConfigError,
    EmptyTrajectoryError,
    TrajectoryDimensionError,
    TrajectoryFormatError,
)

logger = logging.getLogger(__name__)


def load_trajectory(path: Union[str, Path], m: int, p: int) -> TrajectoryData:
    """
    Load a trajectory from CSV: one sample per row, inputs then outputs.

    Blank lines and lines starting with '#' are skipped; no header is needed.

    Args:
        path: CSV file location
        m: Input dimension
        p: Output dimension

    Returns:
        TrajectoryData with one sample per data row

    Raises:
        TrajectoryFormatError: A cell is not numeric (row and column are 1-based)
        TrajectoryDimensionError: A row does not have m+p columns
        EmptyTrajectoryError: The file holds no samples
    """
    path = Path(path)
    width = m + p
    rows: List[List[float]] = []
    with open(path, "r", newline="") as handle:
        for line_no, cells in enumerate(csv.reader(handle), start=1):
            if not cells or not "".join(cells).strip() or cells[0].lstrip().startswith("#"):
                continue
            if len(cells) != width:
                raise TrajectoryDimensionError(
                    f"{path}: row {line_no} has {len(cells)} columns, expected {width} (m={m}, p={p})"
                )
            values = []
            for col_no, cell in enumerate(cells, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise TrajectoryFormatError(
                        f"{path}: non-numeric value '{cell.strip()}' at row {line_no}, column {col_no}",
                        row=line_no,
                        column=col_no,
                    ) from None
            rows.append(values)

    if not rows:
        raise EmptyTrajectoryError(f"{path}: no samples found")

    samples = np.asarray(rows)
    logger.info(f"Loaded {samples.shape[0]} samples from {path}")
    return TrajectoryData(u=samples[:, :m], y=samples[:, m:])


def save_trajectory(data: TrajectoryData, path: Union[str, Path]) -> Path:
    """Write a trajectory as CSV with shortest round-trip float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        for u_row, y_row in zip(data.u, data.y):
            writer.writerow([repr(float(v)) for v in np.concatenate([u_row, y_row])])
    logger.info(f"Wrote {data.N} samples to {path}")
    return path


def generate_excitation(N: int, low: float, high: float, m: int, seed: int) -> np.ndarray:
    """
    Draw an i.i.d. uniform input sequence on [low, high]^m.

    Uses numpy's PCG64 generator so a seed always reproduces the same sequence.

    Returns:
        N x m array
    """
    if low >= high:
        raise ConfigError(f"excitation bounds must satisfy low < high, got [{low}, {high}]")
    if N < 1 or m < 1:
        raise ConfigError("excitation length and input dimension must be positive")
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=(N, m))
