"""Dense linear-algebra and fixed-step integration utilities.

Everything here is game-agnostic: uniform time grids, classical RK4 with a
Python callback (used by oracles and small sweeps; the hot solver loops live
in ``idgames._kernels``), symmetric eigendecomposition, linear solves and
piecewise-linear interpolation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteState, NotSymmetric, OutOfRange, SingularMatrix


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t0, T] with ``steps`` intervals (steps+1 points)."""

    t0: float
    T: float
    steps: int

    def __post_init__(self):
        if not self.T > self.t0:
            raise ValueError(f"need T > t0, got [{self.t0}, {self.T}]")
        if self.steps < 2:
            raise ValueError(f"need steps >= 2, got {self.steps}")

    @property
    def h(self) -> float:
        return (self.T - self.t0) / self.steps

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.steps + 1)

    def half_times(self) -> np.ndarray:
        """Grid points plus interval midpoints (2*steps + 1 values)."""
        return self.t0 + (self.h / 2.0) * np.arange(2 * self.steps + 1)

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.steps * factor)


def integrate_rk4(rhs, initial, grid: TimeGrid, direction: str = "forward") -> np.ndarray:
    """Classical fixed-step RK4 over a uniform grid.

    Parameters
    ----------
    rhs : callable(t, y) -> dy/dt
    initial : array, value at ``grid.t0`` (forward) or ``grid.T`` (backward)
    direction : "forward" or "backward"

    Returns an array of shape (steps+1, dim) aligned with the grid: row k is
    the solution at t0 + k*h regardless of direction.
    """
    y = np.asarray(initial, dtype=float).copy()
    out = np.empty((grid.steps + 1, y.size))
    h = grid.h
    if direction == "forward":
        ks = range(grid.steps)
        out[0] = y
        sgn = 1.0
    elif direction == "backward":
        ks = range(grid.steps, 0, -1)
        out[grid.steps] = y
        sgn = -1.0
    else:
        raise ValueError(f"unknown direction {direction!r}")

    hh = sgn * h
    for k in ks:
        t = grid.t0 + k * h
        k1 = np.asarray(rhs(t, y))
        k2 = np.asarray(rhs(t + hh / 2, y + (hh / 2) * k1))
        k3 = np.asarray(rhs(t + hh / 2, y + (hh / 2) * k2))
        k4 = np.asarray(rhs(t + hh, y + hh * k3))
        y = y + (hh / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(
                f"non-finite state during {direction} RK4 at step {k}", step=k,
                time=t + hh)
        out[k + 1 if direction == "forward" else k - 1] = y
    return out


def sym_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns (w, V) with m = V @ diag(w) @ V.T and orthonormal columns.
    Raises NotSymmetric if the input deviates by more than 1e-9 relative.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.linalg.norm(m)))
    if np.linalg.norm(m - m.T) > 1e-9 * scale:
        raise NotSymmetric("matrix is not symmetric within 1e-9 relative")
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def solve_linear(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a x = b for square a; raises SingularMatrix when rank-deficient.

    The solution is verified a posteriori: the max-norm residual must stay
    below 1e-8 * (1 + ||b||_inf), which catches numerically singular systems
    that LAPACK still factorizes.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square matrix, got {a.shape}")
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc
    resid = np.max(np.abs(a @ x - b))
    if not np.isfinite(resid) or resid > 1e-8 * (1.0 + np.max(np.abs(b), initial=0.0)):
        raise SingularMatrix(f"solution residual {resid:.3e} exceeds tolerance")
    return x


_NODE_SNAP = 1e-9  # fractional tolerance so grid points evaluate exactly


def interp_linear(grid: TimeGrid, samples: np.ndarray, t: float) -> np.ndarray:
    """Piecewise-linear interpolation of grid-aligned samples at time t,
    exact at the grid points."""
    samples = np.asarray(samples, dtype=float)
    eps = 1e-12 * max(1.0, abs(grid.T))
    if t < grid.t0 - eps or t > grid.T + eps:
        raise OutOfRange(f"t={t} outside [{grid.t0}, {grid.T}]")
    s = (min(max(t, grid.t0), grid.T) - grid.t0) / grid.h
    k = int(np.floor(s))
    a = s - k
    if a > 1.0 - _NODE_SNAP:
        k, a = k + 1, 0.0
    elif a < _NODE_SNAP:
        a = 0.0
    k = min(max(k, 0), grid.steps)
    if a == 0.0:
        return samples[k].copy()
    return (1.0 - a) * samples[k] + a * samples[k + 1]


def interp_linear_many(grid: TimeGrid, samples: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Vectorized interp_linear for an array of query times."""
    samples = np.asarray(samples, dtype=float)
    ts = np.asarray(ts, dtype=float)
    eps = 1e-12 * max(1.0, abs(grid.T))
    if np.any(ts < grid.t0 - eps) or np.any(ts > grid.T + eps):
        raise OutOfRange("query times outside the grid span")
    s = (np.clip(ts, grid.t0, grid.T) - grid.t0) / grid.h
    k = np.floor(s).astype(int)
    a = s - k
    bump = a > 1.0 - _NODE_SNAP
    k = k + bump
    a = np.where(bump | (a < _NODE_SNAP), 0.0, a)
    k = np.clip(k, 0, grid.steps)
    k2 = np.minimum(k + 1, grid.steps)
    if samples.ndim > 1:
        a = a[:, None]
    return (1.0 - a) * samples[k] + a * samples[k2]
