"""Result files of a CLI run: trajectory CSVs, summary tables, text reports and the run manifest."""
import csv
import json
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from control.models import ClosedLoopResult, RunConfig
from utils.serialization import jsonable_dict

logger = logging.getLogger(__name__)


class ResultWriter:
    """Writes every artefact of one run under a single output directory."""

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[str] = []

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def _record(self, path: Path) -> Path:
        self.written.append(path.name)
        logger.info(f"Wrote {path}")
        return path

    def write_trajectory(self, result: ClosedLoopResult, name: str) -> Path:
        """One row per step: t, inputs, outputs, region index and step time."""
        path = self.path(name)
        m, p = result.u_traj.shape[1], result.y_traj.shape[1]
        header = ["t"] + [f"u{i}" for i in range(m)] + [f"y{i}" for i in range(p)] + ["region", "seconds"]
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for t in range(result.steps):
                region = result.region_ids[t] if t < len(result.region_ids) else ""
                seconds = result.step_times[t] if t < len(result.step_times) else ""
                writer.writerow(
                    [t] + [repr(float(v)) for v in result.u_traj[t]] + [repr(float(v)) for v in result.y_traj[t]]
                    + [region, seconds]
                )
        return self._record(path)

    def write_table(self, rows: Sequence[Dict[str, Any]], name: str, title: str = "") -> List[Path]:
        """Same rows as `<name>.csv` and as an aligned `<name>.txt` table."""
        if not rows:
            return []
        fieldnames = list(rows[0].keys())
        csv_path = self.path(f"{name}.csv")
        with open(csv_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            for row in rows:
                writer.writerow(row)

        cells = [[_format(row.get(key)) for key in fieldnames] for row in rows]
        widths = [max(len(key), *(len(c[i]) for c in cells)) for i, key in enumerate(fieldnames)]
        lines = [title] if title else []
        lines.append("  ".join(key.ljust(w) for key, w in zip(fieldnames, widths)))
        lines.append("  ".join("-" * w for w in widths))
        lines.extend("  ".join(c.ljust(w) for c, w in zip(cell_row, widths)) for cell_row in cells)
        txt_path = self.path(f"{name}.txt")
        txt_path.write_text("\n".join(lines) + "\n")
        return [self._record(csv_path), self._record(txt_path)]

    def write_report(self, lines: Sequence[str], name: str = "report.txt") -> Path:
        path = self.path(name)
        path.write_text("\n".join(lines) + "\n")
        return self._record(path)

    def write_manifest(self, run: RunConfig, extra: Dict[str, Any] = None) -> Path:
        """Invocation, environment and the list of files written so far."""
        manifest = {
            "run": run.model_dump(),
            "created_at": datetime.now(timezone.utc).isoformat(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "files": list(self.written),
        }
        manifest.update(extra or {})
        path = self.path("manifest.json")
        path.write_text(json.dumps(jsonable_dict(manifest), indent=2))
        logger.info(f"Wrote {path}")
        return path


def _format(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)
