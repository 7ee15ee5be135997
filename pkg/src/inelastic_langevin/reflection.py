"""Reflection of the integrated path at its running infimum, plus the
time substitution that excises the pinned stretches.

From a single driving path W this module builds the whole coupled family:
Y (the integral of W), I (its running infimum), the excised intervals of
{Y = I}, the time change T with inverse tau, the nonnegative path
X = (Y - I) o T, the velocity V = W o T, the split V = A + B of the
velocity into boundary impulse A and a Brownian part B, and the dual
Brownian path B' made of the excised increments on their own clock.

Discrete conventions (load-bearing, see docstrings below):

* cell i = [t_i, t_{i+1}) is classified by its left endpoint;
* an excised interval opens at the first cell of a pinned stretch
  (Y at its running minimum) whose left endpoint has W < 0, and runs to
  the first later grid point with W >= 0.  Short wiggles of Y above I
  while W stays negative are glued into the interval.  This makes every
  interval's increment sum W(d_u) - W(u) strictly positive, hence A is
  exactly nondecreasing and the dual path B' stays strictly below its
  running maximum inside every interval;
* the impulse A is read off B' at the interval-completion indices, so
  level queries against B' resolve by bit-exact equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, HorizonError
from .paths import SamplePath, TimeGrid

__all__ = [
    "InfimumDecomposition",
    "TimeChange",
    "PathBundle",
    "FirstPassage",
    "running_infimum",
    "decompose_infimum_set",
    "build_time_change",
    "reflect_construct",
    "impulse_jump_path",
    "verify_time_shift",
    "verify_noise_recovery",
]


def running_infimum(y: SamplePath) -> SamplePath:
    """Prefix minimum I_k = min(Y_0..Y_k); nonincreasing by construction."""
    return SamplePath(y.grid, np.minimum.accumulate(y.values), times=y.times)


@dataclass
class InfimumDecomposition:
    """Maximal excised intervals of the pinned set, as (u, d_u) pairs.

    ``intervals`` holds grid times; ``cells`` the matching half-open index
    ranges [a, b) (cell indices).  ``trailing`` is the start index of an
    interval cut off by the horizon, or None.  ``boundary_cells`` counts
    grid cells where Y sits at its running minimum but that belong to no
    interval (isolated touches with W >= 0); they are assigned to the
    excursion side and vanish in measure as dt -> 0.
    """

    intervals: list[tuple[float, float]]
    cells: list[tuple[int, int]]
    trailing: int | None
    boundary_cells: int

    @property
    def total_length(self) -> float:
        return float(sum(d - u for u, d in self.intervals))


def _excised_cells(w: np.ndarray, y: np.ndarray, i: np.ndarray):
    """Excised-interval detection shared by the whole module.

    Returns (mask, cells, trailing, boundary_cells): mask[j] is True when
    cell j lies in an excised interval, including a trailing incomplete
    one; ``cells`` lists only completed intervals.
    """
    n = w.size - 1
    mask = np.zeros(n, dtype=bool)
    if n == 0:
        return mask, [], None, 0

    pinned = y[:-1] == i[:-1]  # exact equality: I is a prefix min of Y itself
    start_ok = pinned & (w[:-1] < 0.0)
    # The origin is always pinned with W_0 = 0; it opens an interval when
    # the path immediately heads down.
    if pinned[0] and w[0] <= 0.0 and w[1] < 0.0:
        start_ok[0] = True
    starts = np.flatnonzero(start_ok)
    ups = np.flatnonzero(w[1:] >= 0.0) + 1  # grid points with W >= 0 (candidates for d_u)

    cells: list[tuple[int, int]] = []
    trailing = None
    cursor = 0
    while True:
        s = np.searchsorted(starts, cursor, side="left")
        if s == len(starts):
            break
        a = int(starts[s])
        u = np.searchsorted(ups, a, side="right")
        if u == len(ups):
            mask[a:] = True
            trailing = a
            break
        b = int(ups[u])
        mask[a:b] = True
        cells.append((a, b))
        cursor = b
    boundary = int(np.count_nonzero(pinned & ~mask))
    return mask, cells, trailing, boundary


def decompose_infimum_set(w: SamplePath, y: SamplePath, i: SamplePath) -> InfimumDecomposition:
    """Detect the excised intervals (u, d_u) of the pinned set {Y = I}.

    Interval left endpoints enter the pinned set with W < 0; right
    endpoints are the first subsequent grid point with W >= 0 (the
    discrete return of W to zero, accurate to one increment).
    """
    if not (w.n == y.n == i.n):
        raise ConfigError("W, Y, I must share one grid")
    mask, cells, trailing, boundary = _excised_cells(w.values, y.values, i.values)
    times = w.times
    intervals = [(float(times[a]), float(times[b])) for a, b in cells]
    return InfimumDecomposition(intervals, cells, trailing, boundary)


class TimeChange:
    """Discrete time substitution built from a boolean excision mask.

    Clock cell k maps to the (k+1)-th unexcised original cell; tau is the
    cumulative-count left inverse (tau(T(t)) = t exactly at clock points)
    and tau'(t) = t - tau(t) exactly.  T_prime plays the dual role for the
    excised cells.
    """

    def __init__(self, excised: np.ndarray, dt: float, t0: float = 0.0):
        excised = np.asarray(excised, dtype=bool)
        self.dt = float(dt)
        self.t0 = float(t0)
        self.excised = excised
        self.n = excised.size
        self.exc_idx = np.flatnonzero(~excised)  # original cells kept by the clock
        self.inf_idx = np.flatnonzero(excised)   # original cells on the dual clock
        self.K = self.exc_idx.size
        self.M = self.inf_idx.size
        # cumulative kept-cell count ahead of each original grid point
        self.kept_before = np.concatenate([[0], np.cumsum(~excised)])
        self.cut_before = np.arange(self.n + 1) - self.kept_before

    # -- clock side -----------------------------------------------------
    def T_index(self, k: int) -> int:
        """Original grid index carrying clock point k (0 <= k <= K)."""
        if not (0 <= k <= self.K):
            raise HorizonError(
                f"clock index {k} beyond available excursion measure ({self.K} cells)"
            )
        if k < self.K:
            return int(self.exc_idx[k])
        return int(self.exc_idx[-1]) + 1 if self.K else 0

    def T_indices(self) -> np.ndarray:
        out = np.empty(self.K + 1, dtype=int)
        out[: self.K] = self.exc_idx
        out[self.K] = self.exc_idx[-1] + 1 if self.K else 0
        return out

    @property
    def T(self) -> np.ndarray:
        """T at the clock grid points, as original times."""
        return self.t0 + self.dt * self.T_indices()

    def T_of(self, clock_time: float) -> float:
        k = int(round(clock_time / self.dt))
        return self.t0 + self.dt * self.T_index(k)

    # -- inverse side ----------------------------------------------------
    @property
    def tau(self) -> np.ndarray:
        """tau at the original grid points."""
        return self.dt * self.kept_before

    @property
    def tau_prime(self) -> np.ndarray:
        """tau'(t) = t - tau(t), exactly, at the original grid points."""
        times = self.t0 + self.dt * np.arange(self.n + 1)
        return times - self.tau

    # -- dual side ---------------------------------------------------------
    def Tp_indices(self) -> np.ndarray:
        out = np.empty(self.M + 1, dtype=int)
        out[: self.M] = self.inf_idx
        out[self.M] = self.inf_idx[-1] + 1 if self.M else 0
        return out

    @property
    def T_prime(self) -> np.ndarray:
        return self.t0 + self.dt * self.Tp_indices()

    def clock_grid(self) -> TimeGrid:
        return TimeGrid(0.0, self.dt, self.K)

    def dual_grid(self) -> TimeGrid:
        return TimeGrid(0.0, self.dt, self.M)


def build_time_change(y: SamplePath, i: SamplePath) -> TimeChange:
    """Time change from the raw indicator {Y > I} at cell left endpoints.

    This is the bare cumulative-count substitution; the full construction
    (:func:`reflect_construct`) feeds the interval-glued mask instead so
    that boundary cells land on the excised side.
    """
    if y.n != i.n:
        raise ConfigError("Y and I must share one grid")
    excised = y.values[:-1] <= i.values[:-1]
    return TimeChange(excised, y.dt, y.times[0])


@dataclass
class FirstPassage:
    """First-passage map of a nondecreasing ladder: level -> dual time.

    ``levels`` are the impulse values after each completed interval and
    ``times`` the dual-clock times at which B' first reaches them.
    ``query`` resolves an arbitrary level against B' itself; ``inclusive``
    queries (B' >= x, the recovery-side convention) resolve ladder levels
    bit-exactly, while strict queries (B' > x, the bare first-passage
    definition) land one increment past the level.
    """

    levels: np.ndarray
    times: np.ndarray
    bp: np.ndarray = field(repr=False)
    dt: float = 0.0

    def query_index(self, x: float, inclusive: bool = True) -> int:
        cummax = np.maximum.accumulate(self.bp)
        side = "left" if inclusive else "right"
        m = int(np.searchsorted(cummax, x, side=side))
        if m >= self.bp.size:
            raise HorizonError(
                f"insufficient B' horizon: level {x!r} never {'reached' if inclusive else 'exceeded'}"
            )
        return m

    def query(self, x: float, inclusive: bool = True) -> float:
        return self.dt * self.query_index(x, inclusive)


@dataclass
class PathBundle:
    """Full output of the reflection construction on one driving path.

    W, Y, I live on the original grid; X, V, A, B on the clock grid;
    Bp on the dual clock.  V = A + B holds at every clock index up to
    float roundoff, X >= 0 exactly, A is nondecreasing.
    """

    W: SamplePath
    Y: SamplePath
    I: SamplePath
    X: SamplePath
    V: SamplePath
    A: SamplePath
    B: SamplePath
    Bp: SamplePath
    tc: TimeChange
    clock_grid: TimeGrid
    decomposition: InfimumDecomposition

    def first_passage_map(self) -> FirstPassage:
        """sigma' of the bundle's own B', materialized at the A-ladder."""
        bp = self.Bp.values
        dt = self.tc.dt
        ends = [b for _, b in self.decomposition.cells]
        # dual index after completing interval r = number of excised cells
        # up to its right endpoint
        dual_ends = self.tc.cut_before[ends] if ends else np.array([], dtype=int)
        levels = bp[dual_ends] if len(ends) else np.array([])
        return FirstPassage(
            levels=np.asarray(levels, dtype=float),
            times=dt * np.asarray(dual_ends, dtype=float),
            bp=bp,
            dt=dt,
        )


def _trapezoid_integral(w: np.ndarray, dt: float) -> np.ndarray:
    y = np.empty_like(w)
    y[0] = 0.0
    np.cumsum(0.5 * dt * (w[:-1] + w[1:]), out=y[1:])
    return y


def reflect_construct(w: SamplePath, y: SamplePath | None = None) -> PathBundle:
    """Build the reflected, time-changed process and its velocity split.

    When ``y`` is omitted it is computed from W by the trapezoid rule (the
    deterministic function of the supplied samples); pass the jointly
    sampled exact pair when distributional exactness of Y matters.
    """
    if w.values[0] != 0.0:
        raise ConfigError("driving path must start at W_0 = 0")
    grid = w.grid
    if grid is None:
        raise ConfigError("driving path must live on a uniform grid")
    wv = w.values
    if y is None:
        yv = _trapezoid_integral(wv, grid.dt)
        y = SamplePath(grid, yv)
    else:
        if y.n != w.n:
            raise ConfigError("W and Y must share one grid")
        yv = y.values
    iv = np.minimum.accumulate(yv)
    i_path = SamplePath(grid, iv)

    mask, cells, trailing, boundary = _excised_cells(wv, yv, iv)
    times = w.times
    decomposition = InfimumDecomposition(
        [(float(times[a]), float(times[b])) for a, b in cells], cells, trailing, boundary
    )
    tc = TimeChange(mask, grid.dt, grid.t0)

    dw = np.diff(wv)
    t_idx = tc.T_indices()

    # dual path: excised increments laid on their own clock
    bp = np.empty(tc.M + 1)
    bp[0] = 0.0
    np.cumsum(dw[tc.inf_idx], out=bp[1:])

    # clock-side paths; A is B' read at the excised-cell counts, so the
    # impulse ladder and the dual path agree bit-exactly.
    b = np.empty(tc.K + 1)
    b[0] = 0.0
    np.cumsum(dw[tc.exc_idx], out=b[1:])
    mu = tc.cut_before[t_idx]  # excised cells consumed ahead of each clock point
    a = bp[mu]
    v = wv[t_idx]
    x = (yv - iv)[t_idx]

    clock_grid = tc.clock_grid()
    dual_grid = tc.dual_grid()
    return PathBundle(
        W=w,
        Y=y,
        I=i_path,
        X=SamplePath(clock_grid, x),
        V=SamplePath(clock_grid, v),
        A=SamplePath(clock_grid, a),
        B=SamplePath(clock_grid, b),
        Bp=SamplePath(dual_grid, bp),
        tc=tc,
        clock_grid=clock_grid,
        decomposition=decomposition,
    )


def impulse_jump_path(bundle: PathBundle) -> SamplePath:
    """Recompute A as the negated sum of incoming velocities at boundary hits.

    Independent route to the impulse: each detected interval contributes
    -W(u) (the velocity with which the boundary was reached), whereas the
    bundle's A accumulates W(d_u) - W(u).  The two differ per interval by
    W(d_u), which is zero in the continuum and grid-slack small here.
    """
    wv = bundle.W.values
    tc = bundle.tc
    t_idx = tc.T_indices()
    cells = bundle.decomposition.cells
    if not cells:
        return SamplePath(bundle.clock_grid, np.zeros(tc.K + 1))
    starts = np.array([a for a, _ in cells], dtype=int)
    ends = np.array([b for _, b in cells], dtype=int)
    ladder = np.concatenate([[0.0], np.cumsum(-wv[starts])])
    # clock point k has absorbed interval r iff d_u_r <= T(s_k), matching
    # the bundle A's cell accounting
    cnt = np.searchsorted(ends, t_idx, side="right")
    return SamplePath(bundle.clock_grid, ladder[cnt])


def verify_time_shift(bundle: PathBundle) -> float:
    """Max residual of T(t) = t + sigma'(A_t) over the clock grid.

    sigma' here is the inclusive first passage of the bundle's own B'
    (first dual time with B' >= level); ladder levels resolve bit-exactly,
    so the residual vanishes for the glued-interval construction.
    """
    tc = bundle.tc
    bp = bundle.Bp.values
    a = bundle.A.values
    cummax = np.maximum.accumulate(bp)
    sigma_idx = np.searchsorted(cummax, a, side="left")
    if np.any(sigma_idx >= bp.size):
        bad = int(np.argmax(sigma_idx >= bp.size))
        raise HorizonError(f"insufficient B' horizon at clock index {bad}")
    t_idx = bundle.tc.T_indices()
    k = np.arange(tc.K + 1)
    residual_cells = np.abs(t_idx - k - sigma_idx)
    return float(residual_cells.max() * tc.dt) if residual_cells.size else 0.0


def verify_noise_recovery(bundle: PathBundle) -> float:
    """Max |W - (B o tau + B' o tau')| over the original grid points.

    The reconstruction reassembles the same increments, so the residual is
    pure float roundoff.
    """
    tc = bundle.tc
    kept = tc.kept_before
    cut = tc.cut_before
    w_rec = bundle.B.values[kept] + bundle.Bp.values[cut]
    return float(np.max(np.abs(w_rec - bundle.W.values)))
