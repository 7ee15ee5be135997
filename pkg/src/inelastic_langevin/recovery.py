"""Recovery of the driving noise from any compliant solution.

Given a solution (X, V, A, B) of the constrained dynamics together with
an independent auxiliary Brownian path B', this module rebuilds a single
driving path W by splicing: the clock runs through B, and every increase
of the impulse A inserts the stretch of B' needed to first reach the new
impulse level (two-arm-bandit style).  The shifted clock T_t = t +
sigma'(A_t), its left inverse tau, the complementary tau', the open set of
inserted stretches, and the epsilon-thinned approximation are all read off
one deterministic walk over increments.

Conventions:

* level queries against B' inside the recovery use the inclusive first
  passage (first grid time with B' >= level).  Impulse ladders produced by
  the reflection construction are bit-equal to partial sums of their own
  B', so inclusive queries resolve them exactly and the construction ->
  recovery round trip is exact; for an independent B' ties have
  probability zero and the convention is immaterial.
* the standalone :func:`first_passage` keeps the strict definition
  (first grid time with B' > level), which on a ramp returns the next
  grid point above the level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, HorizonError
from .paths import SamplePath, TimeGrid
from .reflection import FirstPassage, _excised_cells

__all__ = [
    "RecoveryArtifacts",
    "EpsilonSplice",
    "first_passage",
    "build_recovery",
    "epsilon_splice",
    "boundary_intervals",
    "verify_solution_recovery",
    "verify_boundary_intervals",
]


def first_passage(bp: SamplePath, x: float) -> float:
    """First grid time with B' strictly above the level x >= 0.

    Raises HorizonError when the level is never exceeded on the available
    path (callers extend B' and retry).
    """
    if x < 0.0:
        raise ConfigError(f"first-passage level must be >= 0, got {x}")
    above = bp.values > x
    if not above.any():
        raise HorizonError(f"insufficient B' horizon: level {x!r} never exceeded")
    return float(bp.times[int(np.argmax(above))])


@dataclass
class RecoveryArtifacts:
    """Everything the splice walk produces for one solution.

    ``W`` lives on its own grid of ``n + consumed`` cells; ``T``/``tau``/
    ``tau_prime`` are arrays over the trace grid / W grid; ``D_A`` holds
    the contact-episode start times; ``O`` the inserted open intervals in
    W-time, one per impulse-increasing step.  ``coverage`` is the last
    trace index whose image T lies inside the built W grid (everything
    when the full extension was feasible).
    """

    sigma_prime: FirstPassage
    D_A: np.ndarray
    W: SamplePath
    T: np.ndarray            # T at trace grid points (times), up to coverage
    tau: np.ndarray          # tau at W grid points (times)
    tau_prime: np.ndarray    # t - tau at W grid points
    O: list[tuple[float, float]]
    coverage: int
    dt: float
    sigma_index: np.ndarray = field(repr=False)   # inclusive passage index per trace point
    b_positions: np.ndarray = field(repr=False)   # W-cell index of each emitted B cell
    consumed: int = 0


def _inclusive_passage_indices(bp: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """First index with B' >= level, vectorized; bp.size when unreachable."""
    cummax = np.maximum.accumulate(bp)
    return np.searchsorted(cummax, levels, side="left")


def _splice_walk(a: np.ndarray, db: np.ndarray, bp: np.ndarray, dt: float,
                 window: float | None):
    """Core interleaving of B increments with B' stretches.

    a: impulse at trace points (n+1); db: B increments per trace cell (n);
    bp: auxiliary path values (M+1).  Returns the increment stream and the
    index bookkeeping shared by all artifacts.
    """
    n = db.size
    m_cells = bp.size - 1
    sig = _inclusive_passage_indices(bp, a)
    ok = sig <= m_cells
    pos = np.arange(n + 1) + sig  # W-grid index of each trace point

    if ok.all():
        feasible = n + int(sig[-1])
    else:
        p_bad = int(np.argmin(ok))
        if p_bad == 0:
            raise HorizonError("insufficient B' horizon: initial impulse unreachable")
        feasible = (p_bad - 1) + m_cells
    if window is None:
        if not ok.all():
            raise HorizonError(
                "insufficient B' horizon for the full extension; pass a window "
                "or supply a longer B'"
            )
        length = feasible
    else:
        length = min(feasible, int(round(window / dt)))

    # trace points whose image stays inside the built W grid
    reachable = np.flatnonzero(ok & (pos <= length))
    coverage = int(reachable[-1]) if reachable.size else -1

    # cells emitted into the stream: ok[k] and pos[k] < length (both prefixes)
    b_keep = int(np.searchsorted(pos, length, side="left"))
    if not ok.all():
        b_keep = min(b_keep, int(np.argmin(ok)))
    b_keep = min(b_keep, n)
    b_pos = pos[:b_keep]  # cell k emitted at W-cell index k + sig[k]
    consumed = length - b_keep

    stream = np.empty(length)
    is_b = np.zeros(length, dtype=bool)
    is_b[b_pos] = True
    stream[is_b] = db[:b_keep]
    stream[~is_b] = np.diff(bp)[:consumed]
    return stream, sig, pos, coverage, length, b_pos, consumed


def build_recovery(x: SamplePath, v: SamplePath, a: SamplePath, b: SamplePath,
                   bp: SamplePath, window: float | None = None) -> RecoveryArtifacts:
    """Splice a driving path W out of a solution (X, V, A, B) and a B'.

    With ``window`` set, W is built on [0, window] and queries past the
    available B' horizon are silently truncated at the window; without it
    the full extension up to T(t_max) is built and an insufficient B'
    raises HorizonError.
    """
    n = b.n
    if not (x.n == v.n == a.n == n):
        raise ConfigError("X, V, A, B must share one grid")
    dt = b.dt
    if abs(bp.dt - dt) > 1e-15 * max(dt, bp.dt):
        raise ConfigError("B' must use the trace step size")
    av, bv, bpv = a.values, b.values, bp.values
    if np.any(np.diff(av) < 0.0):
        raise ConfigError("impulse path A must be nondecreasing")

    db = np.diff(bv)
    stream, sig, pos, coverage, length, b_pos, consumed = _splice_walk(
        av, db, bpv, dt, window
    )
    w = np.empty(length + 1)
    w[0] = 0.0
    np.cumsum(stream, out=w[1:])
    w_path = SamplePath(TimeGrid(0.0, dt, length), w)

    # tau at W grid points: number of B cells ahead of each point
    kept_before = np.zeros(length + 1, dtype=int)
    if b_pos.size:
        np.add.at(kept_before, b_pos + 1, 1)
    kept_before = np.cumsum(kept_before)
    w_times = w_path.times
    tau = dt * kept_before
    tau_prime = w_times - tau

    # contact episodes: maximal runs of impulse-increasing cells
    da = np.diff(av)
    jumps = np.flatnonzero(da > 0.0)
    if jumps.size:
        starts = jumps[np.concatenate([[True], np.diff(jumps) > 1])]
        d_a = b.times[starts + 1]
    else:
        d_a = np.array([])

    # inserted stretches in W time, one per impulse-increasing cell
    o_intervals = []
    for k in jumps:
        if k + 1 > coverage:
            break
        lo = (k + 1 + sig[k]) * dt
        hi = (k + 1 + sig[k + 1]) * dt
        if hi > lo:
            o_intervals.append((float(lo), float(hi)))

    ladder = av[np.concatenate([jumps + 1, [n]])] if jumps.size else av[-1:]
    fp = FirstPassage(
        levels=np.asarray(ladder, dtype=float),
        times=dt * _inclusive_passage_indices(bpv, np.asarray(ladder, dtype=float)).astype(float),
        bp=bpv,
        dt=dt,
    )
    t_at_trace = dt * pos.astype(float)
    return RecoveryArtifacts(
        sigma_prime=fp,
        D_A=np.asarray(d_a, dtype=float),
        W=w_path,
        T=t_at_trace,
        tau=tau,
        tau_prime=tau_prime,
        O=o_intervals,
        coverage=coverage,
        dt=dt,
        sigma_index=sig,
        b_positions=b_pos,
        consumed=consumed,
    )


@dataclass
class EpsilonSplice:
    """Thinned recovery keeping only impulse increments above the threshold."""

    epsilon: float
    A_eps: SamplePath
    tau_eps: np.ndarray
    W_eps: SamplePath
    jump_times: np.ndarray
    coverage: int


def epsilon_splice(x: SamplePath, v: SamplePath, a: SamplePath, b: SamplePath,
                   bp: SamplePath, epsilon: float,
                   window: float | None = None) -> EpsilonSplice:
    """Recovery against the thinned impulse A^(eps).

    A step's impulse increment equals the absorbed incoming speed, so
    thinning by increment size implements the |v_in| > epsilon rule; as
    epsilon decreases the thinned splice converges to the full one.
    """
    if epsilon <= 0.0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    da = np.diff(a.values)
    keep = da > epsilon
    a_eps = np.concatenate([[0.0], np.cumsum(np.where(keep, da, 0.0))])
    jump_times = b.times[np.flatnonzero(keep) + 1]
    art = build_recovery(x, v, SamplePath(a.grid, a_eps, times=a.times), b, bp,
                         window=window)
    return EpsilonSplice(
        epsilon=epsilon,
        A_eps=SamplePath(a.grid, a_eps, times=a.times),
        tau_eps=art.tau,
        W_eps=art.W,
        jump_times=jump_times,
        coverage=art.coverage,
    )


def boundary_intervals(a: SamplePath, bp: SamplePath) -> list[tuple[float, float]]:
    """Open set of inserted stretches: one interval per impulse jump.

    Interval for a jump at trace time t is (t + s'(A_{t-}), t + s'(A_t))
    with s' the inclusive passage time of B'.
    """
    if np.any(np.diff(a.values) < 0.0):
        raise ConfigError("impulse path A must be nondecreasing")
    dt = a.dt
    av = a.values
    sig = _inclusive_passage_indices(bp.values, av)
    m_cells = bp.n
    out = []
    for k in np.flatnonzero(np.diff(av) > 0.0):
        if sig[k + 1] > m_cells:
            raise HorizonError("insufficient B' horizon for a jump of A")
        lo = (k + 1 + sig[k]) * dt
        hi = (k + 1 + sig[k + 1]) * dt
        out.append((float(lo), float(hi)))
    return out


def _trapezoid(w: np.ndarray, dt: float) -> np.ndarray:
    y = np.empty_like(w)
    y[0] = 0.0
    np.cumsum(0.5 * dt * (w[:-1] + w[1:]), out=y[1:])
    return y


def verify_solution_recovery(artifacts: RecoveryArtifacts,
                             x: SamplePath) -> tuple[float, float]:
    """Residuals of the two recovery identities over the covered clock grid.

    (ii): sup |X_t - (Y - I)(T_t)| where Y integrates the recovered W by
    the trapezoid rule and I is its running infimum.
    (iii): sup |T_t - T_rec(t)| where T_rec is rebuilt from the recovered
    path's own excised-interval mask (the same detector the construction
    uses), expressed in time units.
    """
    dt = artifacts.dt
    w = artifacts.W.values
    y = _trapezoid(w, dt)
    i = np.minimum.accumulate(y)

    p_max = artifacts.coverage
    p = np.arange(p_max + 1)
    q = p + artifacts.sigma_index[: p_max + 1]
    res_ii = float(np.max(np.abs(x.values[: p_max + 1] - (y - i)[q]))) if p_max >= 0 else 0.0

    # clock cell k of the artifacts is the k-th emitted B cell; the
    # reconstructed substitution keeps the unexcised cells of the recovered
    # path, so the residual compares the two index sequences
    mask, _, _, _ = _excised_cells(w, y, i)
    kept = np.flatnonzero(~mask)
    k_max = min(artifacts.b_positions.size, kept.size)
    res_iii = 0.0
    if k_max:
        res_iii = float(
            np.max(np.abs(kept[:k_max] - artifacts.b_positions[:k_max])) * dt
        )
    return res_ii, res_iii


def verify_boundary_intervals(artifacts: RecoveryArtifacts,
                              x: SamplePath, slack: float) -> dict:
    """Discrete checks of the inserted-stretch geometry.

    * measure: cumulative length of the stretches equals tau' at every W
      grid point (exact for the walk, reported as a residual);
    * sign: W <= slack at grid points interior to the stretches, and the
      pulled-back position X(tau(t)) vanishes there.
    """
    dt = artifacts.dt
    length = artifacts.W.n
    is_b = np.zeros(length, dtype=bool)
    is_b[artifacts.b_positions] = True
    cum_o = np.concatenate([[0.0], np.cumsum(~is_b) * dt])
    measure_residual = float(np.max(np.abs(cum_o - artifacts.tau_prime)))

    w = artifacts.W.values
    interior = np.zeros(length + 1, dtype=bool)
    for lo, hi in artifacts.O:
        a_idx = int(round(lo / dt)) + 1
        b_idx = int(round(hi / dt))
        interior[a_idx:b_idx] = True
    sign_max = float(np.max(w[interior])) if interior.any() else float("-inf")

    kept_counts = np.rint(artifacts.tau / dt).astype(int)
    x_pullback = x.values[np.minimum(kept_counts[interior], x.n)] if interior.any() else np.array([])
    x_max = float(np.max(x_pullback)) if x_pullback.size else 0.0
    return {
        "measure_residual": measure_residual,
        "interval_count": len(artifacts.O),
        "w_sign_max": sign_max,
        "w_sign_ok": bool(sign_max <= slack),
        "x_pullback_max": x_max,
    }
