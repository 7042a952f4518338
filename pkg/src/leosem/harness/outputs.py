"""Deterministic CSV and manifest emission."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .. import __version__
from ..env import TRACE_COLUMNS
from ..errors import IoFailure
from .config import ScenarioConfig
from .experiments import ExperimentResult

MANIFEST = "manifest.json"


def _cell(v):
    return repr(v) if isinstance(v, float) else v


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def emit_outputs(results: Sequence[ExperimentResult], out_dir, cfg: ScenarioConfig,
                 extra: dict | None = None) -> Path:
    """One CSV per experiment (plus a summary), trace CSVs and a JSON manifest.

    Output bytes depend only on the results and the config, so identical
    runs produce identical files.
    """
    out = Path(out_dir)
    manifest = {
        "software": "leosem",
        "version": __version__,
        "config_sha256": cfg.digest(),
        "master_seed": cfg.experiment.master_seed,
        "experiments": {},
    }
    if extra:
        manifest.update(extra)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for res in results:
            files = [f"{res.name}.csv"]
            write_csv(out / files[0], res.columns, res.rows)
            if res.summary_columns:
                files.append(f"{res.name}_summary.csv")
                write_csv(out / files[-1], res.summary_columns, res.summary_rows)
            if res.traces:
                tdir = out / "traces" / res.name
                tdir.mkdir(parents=True, exist_ok=True)
                for name in sorted(res.traces):
                    write_csv(tdir / name, TRACE_COLUMNS, res.traces[name])
                    files.append(f"traces/{res.name}/{name}")
            manifest["experiments"][res.name] = {"files": files, "seeds": res.seeds}
        path = out / MANIFEST
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write outputs to {out}: {exc}") from exc
    return path
