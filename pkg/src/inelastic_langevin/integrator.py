"""Direct time-stepping solver for the constrained second-order dynamics.

Velocity is driven by Brownian increments (or a deterministic force);
position integrates velocity; the completely inelastic constraint is
applied by projection at the end of every step: a step that would land at
negative position is clamped to (X, V) = (0, 0) and the killed velocity
is absorbed into the nondecreasing impulse A.

Bookkeeping is arranged so the audits of the discrete constraint are
exact in floating point: every clamped step ends with X == 0.0 and
V == 0.0 bitwise, A increases strictly at clamps and nowhere else, and
V == (v0 + B) + A holds bitwise at every step when recomputed in that
association order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError
from .paths import RngStream, SamplePath, TimeGrid

__all__ = [
    "IntegratorConfig",
    "ImpactEvent",
    "SolutionTrace",
    "simulate_sde",
    "simulate_deterministic",
    "simulate_sde_batch",
    "detect_impacts",
]


@dataclass(frozen=True)
class IntegratorConfig:
    """Parameters for one trace.

    Exactly one of ``stream`` (white-noise forcing) and ``force`` (a
    deterministic force of time) must be set.  ``refine_impacts`` locates
    the boundary crossing inside the step from the linear-in-step position
    and applies the clamp there, redrawing the remaining velocity
    increment from the Brownian bridge conditioned on the full step; the
    driving increments recorded in B are unchanged.
    """

    dt: float
    t_max: float
    x0: float = 0.0
    v0: float = 0.0
    stream: RngStream | None = None
    force: Callable[[float], float] | None = None
    refine_impacts: bool = False
    t0: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0.0):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_max < self.dt:
            raise ConfigError(f"t_max must be at least dt, got {self.t_max}")
        if self.x0 < 0.0:
            raise ConfigError(f"x0 must be >= 0, got {self.x0}")
        if (self.stream is None) == (self.force is None):
            raise ConfigError("exactly one of stream (noise) or force must be given")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def grid(self) -> TimeGrid:
        return TimeGrid(self.t0, self.dt, self.n_steps)


@dataclass(frozen=True)
class ImpactEvent:
    """First touch of one contact episode.

    ``v_in`` is the incoming velocity (< 0) and ``jump = -v_in`` the
    velocity absorbed by the boundary.  Consecutive clamped steps merge
    into the episode opened by this event; their dwell absorption shows up
    in A, not as separate events.
    """

    time: float
    v_in: float
    jump: float


@dataclass
class SolutionTrace:
    X: SamplePath
    V: SamplePath
    A: SamplePath
    B: SamplePath
    events: list[ImpactEvent]
    clamped: np.ndarray  # clamped[k] True when step k (cell k) ended clamped
    config: IntegratorConfig


def _step_arrays(dt, n, x0, v0, db, refine_z=None):
    """Shared stepping core over a batch of paths.

    db has shape (paths, n); returns X, V, A, B of shape (paths, n+1) and
    the clamp mask (paths, n).  refine_z, when given, supplies the bridge
    normals for sub-step impact refinement.
    """
    paths = db.shape[0]
    X = np.empty((paths, n + 1))
    V = np.empty((paths, n + 1))
    A = np.empty((paths, n + 1))
    B = np.empty((paths, n + 1))
    clamped = np.zeros((paths, n), dtype=bool)
    theta = np.zeros((paths, n)) if refine_z is not None else None

    X[:, 0] = x0
    B[:, 0] = 0.0
    if x0 == 0.0 and v0 < 0.0:
        # constraint active from the start: absorb the initial velocity
        A[:, 0] = -v0
        V[:, 0] = 0.0
    else:
        A[:, 0] = 0.0
        V[:, 0] = v0

    for k in range(n):
        b_new = B[:, k] + db[:, k]
        s = v0 + b_new
        v_star = s + A[:, k]
        x_star = X[:, k] + v_star * dt
        clamp = (x_star < 0.0) | ((x_star == 0.0) & (v_star < 0.0))
        clamped[:, k] = clamp

        if refine_z is None:
            a_new = np.where(clamp, -s, A[:, k])
            X[:, k + 1] = np.where(clamp, 0.0, x_star)
            V[:, k + 1] = s + a_new
        else:
            # locate the in-step zero of the linear position, clamp there,
            # and rebuild the tail of the step from the conditioned bridge;
            # a nonpositive tail velocity is absorbed as well (the particle
            # stays clamped), so A never decreases
            with np.errstate(divide="ignore", invalid="ignore"):
                th = np.where(clamp, X[:, k] / np.maximum(X[:, k] - x_star, 1e-300), 0.0)
            theta[:, k] = th
            rest = 1.0 - th
            cond_mean = rest * db[:, k]
            cond_sd = np.sqrt(np.maximum(th * rest * dt, 0.0))
            zeta = cond_mean + cond_sd * refine_z[:, k]
            v_after = np.where(clamp, np.maximum(zeta, 0.0), 0.0)
            x_after = 0.5 * v_after * rest * dt  # velocity rebuilt linearly from 0
            # keep the bookkeeping identity: choose A so that (v0+B)+A == V
            a_new = np.where(clamp, v_after - s, A[:, k])
            X[:, k + 1] = np.where(clamp, x_after, x_star)
            V[:, k + 1] = s + a_new
        A[:, k + 1] = a_new
        B[:, k + 1] = b_new
    return X, V, A, B, clamped, theta


def _build_trace(config: IntegratorConfig, db: np.ndarray, refine_z=None) -> SolutionTrace:
    n = config.n_steps
    X, V, A, B, clamped, theta = _step_arrays(
        config.dt, n, config.x0, config.v0, db[None, :],
        refine_z[None, :] if refine_z is not None else None,
    )
    grid = config.grid()
    times = grid.times()
    events: list[ImpactEvent] = []
    if config.x0 == 0.0 and config.v0 < 0.0:
        events.append(ImpactEvent(times[0], config.v0, -config.v0))
    prev = False
    for k in range(n):
        if clamped[0, k] and not prev:
            v_star = (config.v0 + B[0, k + 1]) + A[0, k]  # pre-clamp velocity
            t_evt = times[k + 1]
            if theta is not None:
                t_evt = times[k] + theta[0, k] * config.dt
            events.append(ImpactEvent(float(t_evt), float(v_star), float(-v_star)))
        prev = clamped[0, k]
    return SolutionTrace(
        X=SamplePath(grid, X[0]),
        V=SamplePath(grid, V[0]),
        A=SamplePath(grid, A[0]),
        B=SamplePath(grid, B[0]),
        events=events,
        clamped=clamped[0],
        config=config,
    )


def simulate_sde(config: IntegratorConfig) -> SolutionTrace:
    """One trace of the white-noise-forced dynamics."""
    if config.stream is None:
        raise ConfigError("simulate_sde needs white-noise forcing (a stream)")
    n = config.n_steps
    db = config.stream.normals(n) * math.sqrt(config.dt)
    refine_z = None
    if config.refine_impacts:
        refine_z = config.stream.with_channel("refine").normals(n)
    return _build_trace(config, db, refine_z)


def simulate_deterministic(config: IntegratorConfig) -> SolutionTrace:
    """Same stepping with the Brownian increment replaced by F(t) dt.

    The force is evaluated at the left endpoint of each step.
    """
    if config.force is None:
        raise ConfigError("simulate_deterministic needs a force function")
    n = config.n_steps
    t_left = config.t0 + config.dt * np.arange(n)
    f = np.asarray([config.force(float(t)) for t in t_left], dtype=float)
    db = f * config.dt
    return _build_trace(config, db)


def simulate_sde_batch(dt: float, t_max: float, streams: Sequence[RngStream],
                       x0: float = 0.0, v0: float = 0.0) -> tuple[np.ndarray, ...]:
    """Vectorized stepping across many paths; one stream per path index.

    Returns (X, V, A, B, clamped) as 2-d arrays indexed by (path, step).
    Row i is bit-identical to simulate_sde run with streams[i] alone, so
    results do not depend on how paths are grouped into batches.
    """
    n = int(round(t_max / dt))
    db = np.empty((len(streams), n))
    root = math.sqrt(dt)
    for i, s in enumerate(streams):
        db[i] = s.normals(n) * root
    X, V, A, B, clamped, _ = _step_arrays(dt, n, x0, v0, db)
    return X, V, A, B, clamped


def detect_impacts(trace: SolutionTrace, epsilon: float = 0.0) -> list[ImpactEvent]:
    """Events with incoming speed above ``epsilon``, in time order.

    With epsilon > 0 the returned sequence is finite and discrete; every
    event satisfies X(time) = 0 (post-clamp) and v_in < -epsilon.
    """
    if epsilon < 0.0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}")
    return [e for e in trace.events if e.v_in < -epsilon]
