"""Exact Gaussian sampling of Brownian motion and its time integral.

Everything here is a pure function of (grid, stream).  Streams are
counter-based (Philox keyed off a SeedSequence), so any path can be
regenerated bit-identically in isolation and path-level parallelism is
deterministic regardless of scheduling.

The integrated path Y_t = int_0^t W_s ds is advanced by the exact
conditional Gaussian step, not by a Riemann sum of W, so (W, Y) has the
exact joint law at the grid points for any step size.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, HorizonError

__all__ = [
    "TimeGrid",
    "SamplePath",
    "RngStream",
    "sample_brownian",
    "sample_langevin_pair",
    "bridge_refine",
    "bridge_crossing_prob",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with points t_i = t0 + i*dt for i = 0..n.

    ``n`` is the number of cells; the grid carries n+1 points.  n = 0 is
    allowed and describes the single-point grid (no increments).
    """

    t0: float = 0.0
    dt: float = 1e-3
    n: int = 1000

    def __post_init__(self):
        if not (self.dt > 0.0) or not math.isfinite(self.dt):
            raise ConfigError(f"grid dt must be positive and finite, got {self.dt}")
        if self.n < 0:
            raise ConfigError(f"grid n must be >= 0, got {self.n}")

    @property
    def t_end(self) -> float:
        return self.t0 + self.n * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n + 1)

    def refined(self, factor: int) -> "TimeGrid":
        if factor < 1:
            raise ConfigError(f"refinement factor must be >= 1, got {factor}")
        return TimeGrid(self.t0, self.dt / factor, self.n * factor)


class SamplePath:
    """A time grid plus one value per grid point.

    The universal carrier for W, Y, I, X, V, A, B and B'.  Uniform paths
    carry their :class:`TimeGrid`; locally refined paths (see
    :func:`bridge_refine`) carry explicit, strictly increasing times and
    have ``grid is None``.
    """

    __slots__ = ("grid", "values", "_times")

    def __init__(self, grid: TimeGrid | None, values, times=None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ConfigError("path values must be a nonempty 1-d array")
        if not np.all(np.isfinite(values)):
            raise ConfigError("path values must all be finite")
        if grid is not None:
            if values.size != grid.n + 1:
                raise ConfigError(
                    f"expected {grid.n + 1} values for the grid, got {values.size}"
                )
            self._times = None
        else:
            times = np.asarray(times, dtype=float)
            if times.shape != values.shape:
                raise ConfigError("times and values must have equal length")
            if np.any(np.diff(times) <= 0.0):
                raise ConfigError("times must be strictly increasing")
            self._times = times
        self.grid = grid
        self.values = values

    @classmethod
    def from_times(cls, times, values) -> "SamplePath":
        return cls(None, values, times=times)

    @property
    def times(self) -> np.ndarray:
        if self.grid is not None:
            return self.grid.times()
        return self._times

    @property
    def n(self) -> int:
        """Number of cells (len(values) - 1)."""
        return self.values.size - 1

    @property
    def dt(self) -> float:
        if self.grid is None:
            raise ConfigError("path is not on a uniform grid")
        return self.grid.dt

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        head = f"SamplePath(n={self.n}"
        if self.grid is not None:
            head += f", dt={self.grid.dt:g}, t0={self.grid.t0:g}"
        return head + ")"


def _channel_key(channel: str) -> int:
    digest = hashlib.blake2s(channel.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngStream:
    """Stateless handle for one reproducible stream of Gaussians.

    Distinct (master_seed, stream_index, channel) triples give
    statistically independent streams; equal triples give bit-identical
    output.  Each call to :meth:`normals` restarts the stream, so one
    operation should draw everything it needs in a single call (ops in
    this package do).  ``zero_noise=True`` is a documented degenerate test
    mode in which every draw is 0.0; it is never used by production
    sampling and must be excluded from statistics.
    """

    master_seed: int
    stream_index: int = 0
    channel: str = ""
    zero_noise: bool = False

    def __post_init__(self):
        if self.stream_index < 0:
            raise ConfigError(f"stream_index must be >= 0, got {self.stream_index}")

    def with_index(self, stream_index: int) -> "RngStream":
        return RngStream(self.master_seed, stream_index, self.channel, self.zero_noise)

    def with_channel(self, channel: str) -> "RngStream":
        return RngStream(self.master_seed, self.stream_index, channel, self.zero_noise)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.stream_index, _channel_key(self.channel)),
        )
        return np.random.Generator(np.random.Philox(seq))

    def normals(self, shape) -> np.ndarray:
        if self.zero_noise:
            return np.zeros(shape)
        return self.generator().standard_normal(shape)


def sample_brownian(grid: TimeGrid, stream: RngStream) -> SamplePath:
    """Standard Brownian motion started from 0, exact at the grid points."""
    dw = stream.normals(grid.n) * math.sqrt(grid.dt)
    values = np.empty(grid.n + 1)
    values[0] = 0.0
    np.cumsum(dw, out=values[1:])
    return SamplePath(grid, values)


def _pair_increments(n: int, dt: float, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map iid standard normals z (n, 2) to (dW, xi) with the exact joint law.

    Cov(dW, xi) = [[h, h^2/2], [h^2/2, h^3/3]] for h = dt; xi is the part
    of the Y-increment not explained by h * W_left.
    """
    h = dt
    dw = math.sqrt(h) * z[:, 0]
    xi = (h ** 1.5) * (0.5 * z[:, 0] + z[:, 1] / math.sqrt(12.0))
    return dw, xi


def sample_langevin_pair(grid: TimeGrid, stream: RngStream) -> tuple[SamplePath, SamplePath]:
    """Jointly exact (W, Y) with Y_t = int_0^t W_s ds, both started at 0.

    Per cell of width h the pair (dW, dY - h*W_left) is centered Gaussian
    with covariance [[h, h^2/2], [h^2/2, h^3/3]]; sampled by Cholesky, so
    Y is distributionally exact at the grid points for any h.
    """
    n, h = grid.n, grid.dt
    z = stream.normals((n, 2))
    dw, xi = _pair_increments(n, h, z)
    w = np.empty(n + 1)
    w[0] = 0.0
    np.cumsum(dw, out=w[1:])
    dy = h * w[:-1] + xi
    y = np.empty(n + 1)
    y[0] = 0.0
    np.cumsum(dy, out=y[1:])
    return SamplePath(grid, w), SamplePath(grid, y)


def bridge_refine(path: SamplePath, cell_index: int, factor: int,
                  stream: RngStream) -> SamplePath:
    """Subdivide one cell of a Brownian path into ``factor`` subcells.

    Interior values follow the Brownian bridge law conditioned on the cell
    endpoints; all original points, endpoints included, are unchanged.
    The result carries explicit times (its grid is no longer uniform).
    """
    if factor < 1:
        raise ConfigError(f"refinement factor must be >= 1, got {factor}")
    times, values = path.times, path.values
    if not (0 <= cell_index < path.n):
        raise ConfigError(
            f"cell_index {cell_index} out of range for a path with {path.n} cells"
        )
    if factor == 1:
        return SamplePath.from_times(times.copy(), values.copy())

    t_l, t_r = times[cell_index], times[cell_index + 1]
    v_l, v_r = values[cell_index], values[cell_index + 1]
    h = (t_r - t_l) / factor
    z = stream.normals(factor - 1)
    interior = np.empty(factor - 1)
    prev = v_l
    for j in range(factor - 1):
        remaining = factor - j  # subcells from the current point to t_r
        mean = prev + (v_r - prev) / remaining
        var = h * (remaining - 1) / remaining
        prev = mean + math.sqrt(var) * z[j]
        interior[j] = prev

    new_times = np.concatenate(
        [times[: cell_index + 1], t_l + h * np.arange(1, factor), times[cell_index + 1 :]]
    )
    new_values = np.concatenate(
        [values[: cell_index + 1], interior, values[cell_index + 1 :]]
    )
    return SamplePath.from_times(new_times, new_values)


def bridge_crossing_prob(w_left: float, w_right: float, h: float, level: float) -> float:
    """Probability that a Brownian bridge between the endpoints dips to ``level``.

    Returns exp(-2 (w_left - level)(w_right - level) / h) when the level is
    below both endpoints, and 1 when the level is at or above an endpoint
    (crossing certain).
    """
    if not (h > 0.0):
        raise ConfigError(f"bridge length h must be positive, got {h}")
    a = w_left - level
    b = w_right - level
    if a <= 0.0 or b <= 0.0:
        return 1.0
    return math.exp(-2.0 * a * b / h)
