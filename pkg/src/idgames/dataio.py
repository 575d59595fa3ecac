"""Trajectory ingestion, preprocessing, synthetic ground truth and
serialization of every artifact the CLI reads or writes.

CSV layout: header row, comma separated, '.' decimal, floats printed with
%.17g so a round trip is exact. JSON schemas carry a ``schema`` version tag.
"""

import csv
import io
import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_smoothing_spline

from .errors import NoConvergence, ParseError, TooFewSamples
from .games import (GameDefinition, ParameterVector, Trajectory,
                    make_collision_game, make_double_integrator, make_lti_game)
from .numerics import TimeGrid

GAME_SCHEMA = "idg-game/1"
CONSTRAINT_SCHEMA = "idg-constraints/1"
RESULT_SCHEMA = "idg-result/1"

OUTPUT_DIR_ENV = "IDG_OUT_DIR"


def default_out_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "runs")


# ---------------------------------------------------------------------------
# synthetic ground truth
# ---------------------------------------------------------------------------

@dataclass
class NoiseSpec:
    """I.i.d. Gaussian disturbance per sample and channel."""

    sigma_x: float = 0.0
    sigma_u: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_x < 0 or self.sigma_u < 0:
            raise ValueError("noise levels must be nonnegative")


def synthesize_gt(game: GameDefinition, theta: ParameterVector,
                  noise: NoiseSpec | None = None, substeps: int = 1) -> Trajectory:
    """Equilibrium trajectory at theta plus seeded Gaussian noise.

    ``substeps`` refines the integration grid (substeps=2 makes the samples
    exact at the solver's half-grid points, which sharpens the residual
    pipeline on noise-free data). The first converged multi-start attempt
    defines the equilibrium; the draw order (states, then controls) is part
    of the determinism contract.
    """
    from .shooting import solve_olne

    work = game
    if substeps > 1:
        work = GameDefinition(game.dynamics, game.bases, game.x0,
                              game.grid.refined(substeps), game.family, game.meta)
    sols = solve_olne(work, theta)
    sol = next((s for s in sols if s.converged), None)
    if sol is None:
        raise NoConvergence("cannot synthesize GT: no shooting start converged")
    X = sol.trajectory.states.copy()
    U = sol.trajectory.controls.copy()
    if noise is not None and (noise.sigma_x > 0 or noise.sigma_u > 0):
        rng = np.random.default_rng(noise.seed)
        X += noise.sigma_x * rng.standard_normal(X.shape)
        U += noise.sigma_u * rng.standard_normal(U.shape)
    return Trajectory(sol.trajectory.grid, X, U)


# ---------------------------------------------------------------------------
# measured recordings: smoothing-spline differentiation and trial windows
# ---------------------------------------------------------------------------

@dataclass
class RawRecording:
    """Timestamped position channels (no control channel)."""

    times: np.ndarray
    positions: np.ndarray  # (K, channels)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.shape[0] != self.times.size:
            raise ValueError("one position row per timestamp required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("timestamps must be strictly increasing")


def differentiate_and_smooth(rec: RawRecording, smoothing: float | None = None) -> Trajectory:
    """Fit a cubic smoothing spline per channel and differentiate it.

    ``smoothing`` is the spline penalty weight; None selects it by
    generalized cross-validation per channel. States and controls are
    resampled onto a uniform grid spanning the recording.
    """
    if rec.times.size < 4:
        raise TooFewSamples(f"need at least 4 samples, got {rec.times.size}")
    steps = rec.times.size - 1
    grid = TimeGrid(float(rec.times[0]), float(rec.times[-1]), steps)
    ts = grid.times()
    nch = rec.positions.shape[1]
    X = np.empty((steps + 1, nch))
    U = np.empty((steps + 1, nch))
    for c in range(nch):
        spline = make_smoothing_spline(rec.times, rec.positions[:, c], lam=smoothing)
        X[:, c] = spline(ts)
        U[:, c] = spline.derivative()(ts)
    return Trajectory(grid, X, U)


@dataclass
class TrialWindow:
    t_start: float
    t_end: float
    valid: bool
    reason: str = ""


def detect_window(traj: Trajectory, control_blocks=None,
                  v_start: float = 0.15, v_stop: float = 0.10) -> TrialWindow:
    """Trial window from speed thresholds: starts when one player's control
    norm first exceeds ``v_start``, ends at the first later time all norms
    drop below ``v_stop``."""
    mtot = traj.controls.shape[1]
    if control_blocks is None:
        control_blocks = [mtot]
    speeds = []
    off = 0
    for blk in control_blocks:
        speeds.append(np.linalg.norm(traj.controls[:, off:off + blk], axis=1))
        off += blk
    if off != mtot:
        raise ValueError("control blocks do not cover the control channels")
    speeds = np.vstack(speeds)
    ts = traj.grid.times()
    started = np.max(speeds, axis=0) > v_start
    if not np.any(started):
        return TrialWindow(0.0, 0.0, False, "never started")
    k0 = int(np.argmax(started))
    stopped = np.all(speeds < v_stop, axis=0)
    stopped[:k0] = False
    if not np.any(stopped):
        return TrialWindow(float(ts[k0]), 0.0, False, "never stopped")
    k1 = int(np.argmax(stopped))
    if k1 <= k0:
        return TrialWindow(float(ts[k0]), float(ts[k1]), False, "window empty")
    return TrialWindow(float(ts[k0]), float(ts[k1]), True)


def extract_window(traj: Trajectory, window: TrialWindow, steps: int | None = None) -> Trajectory:
    """Uniformly resampled restriction of a trajectory to a valid window."""
    if not window.valid:
        raise ValueError(f"window invalid: {window.reason}")
    if steps is None:
        steps = max(2, int(round((window.t_end - window.t_start) / traj.grid.h)))
    grid = TimeGrid(window.t_start, window.t_end, steps)
    states, controls = traj.at_times(grid.times())
    moved = Trajectory(TimeGrid(0.0, window.t_end - window.t_start, steps), states, controls)
    return moved


def target_box_reached(position, target, width: float = 0.33, height: float = 0.31) -> bool:
    """Whether a target point lies inside an axis-aligned robot footprint
    centered at ``position``."""
    dx = abs(float(position[0]) - float(target[0]))
    dy = abs(float(position[1]) - float(target[1]))
    return dx <= width / 2.0 and dy <= height / 2.0


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return "%.17g" % v


def trajectory_to_csv(traj: Trajectory) -> str:
    n = traj.states.shape[1]
    m = traj.controls.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x{j+1}" for j in range(n)] + [f"u{j+1}" for j in range(m)])
    ts = traj.grid.times()
    for k in range(ts.size):
        w.writerow([_fmt(ts[k])] + [_fmt(v) for v in traj.states[k]]
                   + [_fmt(v) for v in traj.controls[k]])
    return buf.getvalue()


def store_trajectory(path, traj: Trajectory):
    with open(path, "w") as fh:
        fh.write(trajectory_to_csv(traj))


def _read_csv_columns(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = []
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{ln}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return [h.strip() for h in header], np.asarray(rows)


def load_trajectory(path) -> Trajectory:
    header, data = _read_csv_columns(path)
    if header[0] != "t":
        raise ParseError(f"{path}: first column must be 't', got {header[0]!r}")
    xcols = [h for h in header if h.startswith("x")]
    ucols = [h for h in header if h.startswith("u")]
    for want in [f"x{j+1}" for j in range(len(xcols))]:
        if want not in header:
            raise ParseError(f"{path}: missing column {want!r}")
    for want in [f"u{j+1}" for j in range(len(ucols))]:
        if want not in header:
            raise ParseError(f"{path}: missing column {want!r}")
    if not xcols:
        raise ParseError(f"{path}: missing state columns x1..xn")
    ts = data[:, 0]
    steps = ts.size - 1
    grid = TimeGrid(float(ts[0]), float(ts[-1]), steps)
    if np.max(np.abs(grid.times() - ts)) > 1e-9 * max(1.0, abs(float(ts[-1]))):
        raise ParseError(f"{path}: time column is not a uniform grid")
    xs = data[:, [header.index(h) for h in [f"x{j+1}" for j in range(len(xcols))]]]
    us = data[:, [header.index(h) for h in [f"u{j+1}" for j in range(len(ucols))]]]
    return Trajectory(grid, xs, us)


def load_raw_recording(path) -> RawRecording:
    header, data = _read_csv_columns(path)
    if header[0] != "t":
        raise ParseError(f"{path}: first column must be 't', got {header[0]!r}")
    return RawRecording(data[:, 0], data[:, 1:])


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def store_game(path, game: GameDefinition):
    doc = {"schema": GAME_SCHEMA, **game.meta}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def game_from_dict(doc: dict) -> GameDefinition:
    builder = doc.get("builder")
    try:
        if builder == "double_integrator":
            return make_double_integrator(doc["T"], doc["x0"],
                                          doc.get("basis_variant", "full"),
                                          doc.get("steps"))
        if builder == "collision":
            return make_collision_game(doc["T"], doc["x0"], doc["x_T"], doc.get("steps"))
        if builder == "lti":
            return make_lti_game(doc["A"], doc["Bs"], doc["state_masks"],
                                 doc["x0"], doc["T"], doc.get("steps"))
    except KeyError as exc:
        raise ParseError(f"game document missing field {exc}") from None
    raise ParseError(f"unknown game builder {builder!r}")


def load_game(path) -> GameDefinition:
    doc = _load_json(path)
    if doc.get("schema") != GAME_SCHEMA:
        raise ParseError(f"{path}: expected schema {GAME_SCHEMA!r}, got {doc.get('schema')!r}")
    return game_from_dict(doc)


def store_theta(path, theta: ParameterVector):
    with open(path, "w") as fh:
        json.dump({"players": [p.tolist() for p in theta.players]}, fh, indent=2)
        fh.write("\n")


def load_theta(path) -> ParameterVector:
    doc = _load_json(path)
    if "players" not in doc:
        raise ParseError(f"{path}: missing field 'players'")
    return ParameterVector([np.asarray(p, float) for p in doc["players"]])


def store_constraints(path, spec):
    doc = {"schema": CONSTRAINT_SCHEMA,
           "players": [{"pins": [[int(j), float(v)] for j, v in pc.pins],
                        "lower_bounds": [[int(j), float(b)] for j, b in pc.lower_bounds]}
                       for pc in spec.players]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_constraints(path):
    from .residual import ConstraintSpec, PlayerConstraints
    doc = _load_json(path)
    if doc.get("schema") != CONSTRAINT_SCHEMA:
        raise ParseError(f"{path}: expected schema {CONSTRAINT_SCHEMA!r}")
    if "players" not in doc:
        raise ParseError(f"{path}: missing field 'players'")
    players = []
    for entry in doc["players"]:
        players.append(PlayerConstraints(
            [(int(j), float(v)) for j, v in entry.get("pins", [])],
            [(int(j), float(b)) for j, b in entry.get("lower_bounds", [])]))
    return ConstraintSpec(players)


def store_result(path, payload: dict):
    doc = {"schema": RESULT_SCHEMA, **payload}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj)}")


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
