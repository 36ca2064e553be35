"""
Exporters - Deterministic CSV/JSON artifacts for experiment results, datasets and models
"""
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from modcomb.errors import DimensionMismatchError
from modcomb.learning.hypothesis import DataSet
from modcomb.systems.simulators import TrajectorySet

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.12g'
SUMMARY_FILE = 'summary.json'


@dataclass
class ResultTable:
    """Named table with a fixed column order"""
    name: str
    columns: Sequence[str]
    rows: List[Dict] = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(self.columns))


@dataclass
class ExperimentResults:
    experiment: str
    summary: Dict = field(default_factory=dict)
    tables: Dict[str, ResultTable] = field(default_factory=dict)
    extras: Dict[str, Dict] = field(default_factory=dict)

    def table(self, name: str, columns: Sequence[str]) -> ResultTable:
        if name not in self.tables:
            self.tables[name] = ResultTable(name, columns)
        return self.tables[name]


def round_floats(value):
    """Recursively round floats to 12 significant digits; NaN and inf become None"""
    if isinstance(value, dict):
        return {str(k): round_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v) for v in value]
    if isinstance(value, np.ndarray):
        return round_floats(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.12g}")
    return value


def write_json(payload: Dict, path: str) -> str:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(round_floats(payload), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def write_table(table: ResultTable, path: str) -> str:
    table.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def emit_summary(results: ExperimentResults, output_dir: str) -> List[str]:
    """
    Write summary.json, one CSV per table and one JSON per extra payload.

    Returns:
        Written paths in a stable order
    """
    os.makedirs(output_dir, exist_ok=True)
    written = []
    for name in sorted(results.tables):
        written.append(write_table(results.tables[name], os.path.join(output_dir, f"{name}.csv")))
    for name in sorted(results.extras):
        written.append(write_json(results.extras[name], os.path.join(output_dir, f"{name}.json")))

    summary = {
        'experiment': results.experiment,
        'summary': results.summary,
        'tables': sorted(results.tables),
    }
    written.insert(0, write_json(summary, os.path.join(output_dir, SUMMARY_FILE)))
    logger.info("Wrote %d artifact files to %s", len(written), output_dir)
    return written


def _columns(prefix: str, count: int) -> List[str]:
    return [f"{prefix}_{i}" for i in range(count)]


def save_dataset(data: DataSet, path: str, extra: Dict = None) -> str:
    """
    CSV with columns x_i, y_i, c_i, e_i and a ``<path>.manifest.json`` sidecar.
    """
    blocks = [('x', data.inputs), ('y', data.targets), ('c', data.controls), ('e', data.externals)]
    frames = [pd.DataFrame(arr, columns=_columns(prefix, arr.shape[1])) for prefix, arr in blocks if arr is not None]
    pd.concat(frames, axis=1).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    write_json({**data.manifest(), **(extra or {})}, f"{path}.manifest.json")
    return path


def load_dataset(path: str) -> DataSet:
    with open(f"{path}.manifest.json", 'r', encoding='utf-8') as f:
        manifest = json.load(f)
    frame = pd.read_csv(path)

    def block(prefix, count):
        if count == 0:
            return None
        cols = _columns(prefix, count)
        missing = [c for c in cols if c not in frame.columns]
        if missing:
            raise DimensionMismatchError(f"dataset columns for '{prefix}'", expected=count, actual=count - len(missing))
        return frame[cols].to_numpy(dtype=float)

    return DataSet(
        inputs=block('x', manifest['state_dim']),
        targets=block('y', manifest['target_dim']),
        controls=block('c', manifest['control_dim']),
        externals=block('e', manifest['external_dim']),
    )


def save_trajectories(traj: TrajectorySet, path: str) -> str:
    """Long-format CSV (trajectory, step, u_0..u_{K-1}) plus manifest"""
    s, steps, K = traj.states.shape
    frame = pd.DataFrame(traj.states.reshape(s * steps, K), columns=_columns('u', K))
    frame.insert(0, 'step', np.tile(np.arange(steps), s))
    frame.insert(0, 'trajectory', np.repeat(np.arange(s), steps))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    write_json(traj.manifest(), f"{path}.manifest.json")
    return path


def load_trajectories(path: str) -> TrajectorySet:
    with open(f"{path}.manifest.json", 'r', encoding='utf-8') as f:
        manifest = json.load(f)
    frame = pd.read_csv(path)
    K = manifest['state_dim']
    states = frame[_columns('u', K)].to_numpy(dtype=float).reshape(manifest['trajectories'], manifest['steps'] + 1, K)
    parameters = {k: v for k, v in manifest.items() if k not in ('seed', 'law', 'trajectories', 'steps', 'state_dim')}
    return TrajectorySet(states=states, seed=manifest['seed'], law=manifest['law'], parameters=parameters)


def save_model(model, path: str) -> str:
    """JSON of a model's ``to_dict`` payload"""
    return write_json(model.to_dict(), path)


def load_model_payload(path: str) -> Dict:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
