import json
import math
import os
from dataclasses import asdict, is_dataclass
from enum import Enum
from typing import Iterable, List, Sequence

import numpy as np
import pandas as pd

from flow.engine import Trajectory, p_from_v
from game.errors import DomainError

FLOAT_FORMAT = "%.12g"


def round12(x: float):
    """12 significant digits; infinities become None so the JSON stays standard."""
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.12g}")


class NumpyEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, np.floating):
            return round12(o)
        elif isinstance(o, np.integer):
            return int(o)
        elif isinstance(o, (complex, np.complexfloating)):
            # [re, im]
            return [round12(o.real), round12(o.imag)]
        elif isinstance(o, np.ndarray):
            return [self.default(x) if isinstance(x, (np.generic, complex)) else x for x in o.tolist()]
        elif isinstance(o, Enum):
            return o.value
        elif isinstance(o, (set, frozenset)):
            return sorted(o)
        elif is_dataclass(o):
            return asdict(o)
        return super(NumpyEncoder, self).default(o)


def _prepare(path: str) -> None:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)


def write_json(payload, path: str) -> None:
    _prepare(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, cls=NumpyEncoder)


def write_table(rows: Iterable[Sequence], columns: List[str], path: str) -> None:
    _prepare(path)
    frame = pd.DataFrame(list(rows), columns=columns)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def _label(label) -> str:
    if isinstance(label, tuple):
        return "/".join(map(str, label))
    return str(label)


def trajectory_columns(n: int) -> List[str]:
    columns = ["event_index", "s_cum", "rho_cum", "regionA", "regionB"]
    for prefix in ("vA", "vB", "pA", "pB"):
        columns += [f"{prefix}{k}" for k in range(1, n + 1)]
    return columns + ["event_kind"]


def trajectory_rows(trajectory: Trajectory) -> List[list]:
    """
    One row per event; row 0 is the initial state. regionA/regionB are the strategies
    played on the segment ending at the event (for row 0: the first segment).
    """
    game = trajectory.game
    s_cum, rho_cum = trajectory.cumulative_times()
    states = [trajectory.final_state if not trajectory.segments else trajectory.segments[0].start]
    states += [segment.end for segment in trajectory.segments]
    labels = [(seg.labelA, seg.labelB) for seg in trajectory.segments]
    if labels:
        labels.insert(0, labels[0])
    else:
        labels = [("", "")]
    kinds = ["Start"] + [seg.end_event.label for seg in trajectory.segments]

    rows = []
    for k, state in enumerate(states):
        try:
            p = p_from_v(game, state)
            pA, pB = p.pA.components, p.pB.components
        except DomainError:
            pA = pB = np.full(game.n, np.nan)
        rows.append([k, s_cum[k], rho_cum[k], _label(labels[k][0]), _label(labels[k][1]),
                     *state.vA, *state.vB, *pA, *pB, kinds[k]])
    last = states[-1]
    for event in trajectory.terminal_events:
        rows.append([len(rows), s_cum[-1], rho_cum[-1], rows[-1][3], rows[-1][4],
                     *last.vA, *last.vB, *rows[-1][5 + 2 * game.n:5 + 4 * game.n], event.label])
    return rows


def write_trajectory_csv(trajectory: Trajectory, path: str) -> None:
    write_table(trajectory_rows(trajectory), trajectory_columns(trajectory.game.n), path)


def itinerary_payload(trajectory: Trajectory) -> List[dict]:
    payload = []
    for entry in trajectory.itinerary():
        payload.append({
            "A": list(entry.A) if isinstance(entry.A, tuple) else entry.A,
            "B": list(entry.B) if isinstance(entry.B, tuple) else entry.B,
            "duration_s": round12(entry.duration_s),
            "duration_rho": round12(entry.duration_rho),
        })
    return payload


def write_itinerary_json(trajectory: Trajectory, path: str) -> None:
    write_json(itinerary_payload(trajectory), path)
