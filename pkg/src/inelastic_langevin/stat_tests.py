"""Statistical verification battery used by the acceptance checks.

Kolmogorov-Smirnov one- and two-sample tests with asymptotic p-values
(Kolmogorov series truncated at 100 terms), a composite Brownian-motion
battery (increment normality + quadratic variation + lag-1 correlation),
and the occupation estimator for the boundary set.

Thresholds are fixed per component; the calibration helper replays any
test on its null model and reports the rejection rate, which the test
suite pins to [0.5x, 2x] of nominal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import ConfigError
from .paths import SamplePath

__all__ = [
    "TestReport",
    "kolmogorov_sf",
    "ks_one_sample",
    "ks_two_sample",
    "brownian_battery",
    "zero_set_measure",
    "calibrate",
]

_KOLMOGOROV_TERMS = 100


@dataclass
class TestReport:
    """Outcome of one statistical check.

    ``pass_`` is determined solely by the stated rule for the test; the
    JSON form carries exactly the fields name, statistic, p_value,
    threshold, pass, n.  Composite tests stash their per-component reports
    in ``components`` (not serialized).
    """

    name: str
    statistic: float
    p_value: float | None
    threshold: float
    pass_: bool
    n: int
    components: list["TestReport"] | None = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "threshold": self.threshold,
            "pass": bool(self.pass_),
            "n": self.n,
        }


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the Kolmogorov distribution, 100-term series."""
    if lam <= 0.0:
        return 1.0
    total = 0.0
    for j in range(1, _KOLMOGOROV_TERMS + 1):
        term = math.exp(-2.0 * j * j * lam * lam)
        total += term if j % 2 else -term
        if term < 1e-18:
            break
    return float(min(1.0, max(0.0, 2.0 * total)))


def ks_one_sample(samples, cdf, alpha: float = 0.01) -> TestReport:
    """One-sample KS test of ``samples`` against the distribution ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 8:
        raise ConfigError(f"KS test needs at least 8 samples, got {n}")
    u = np.asarray(cdf(x), dtype=float)
    grid = np.arange(1, n + 1) / n
    d = float(max(np.max(grid - u), np.max(u - (grid - 1.0 / n))))
    p = kolmogorov_sf(math.sqrt(n) * d)
    return TestReport("ks_one_sample", d, p, alpha, p > alpha, n)


def ks_two_sample(a, b, alpha: float = 0.01) -> TestReport:
    """Two-sample KS test that the two samples share one law."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    n, m = a.size, b.size
    if n < 8 or m < 8:
        raise ConfigError(f"KS test needs at least 8 samples per side, got {n}, {m}")
    both = np.concatenate([a, b])
    fa = np.searchsorted(a, both, side="right") / n
    fb = np.searchsorted(b, both, side="right") / m
    d = float(np.max(np.abs(fa - fb)))
    lam = math.sqrt(n * m / (n + m)) * d
    p = kolmogorov_sf(lam)
    return TestReport("ks_two_sample", d, p, alpha, p > alpha, n + m)


def brownian_battery(path: SamplePath, alpha: float = 0.01,
                     qv_tol: float = 0.05) -> TestReport:
    """Composite fingerprint test that a sampled path is Brownian.

    1. increments are N(0, dt) (KS, p > alpha);
    2. quadratic variation over the path is within ``qv_tol`` of t_max;
    3. lag-1 increment autocorrelation within +-3/sqrt(n).

    Passes iff all three pass.  Sized for n >= a few thousand; at small n
    the quadratic-variation tolerance dominates the error rate.
    """
    dw = np.diff(path.values)
    n = dw.size
    if n < 100:
        raise ConfigError(f"battery needs at least 100 increments, got {n}")
    dt = path.dt
    span = n * dt

    sd = math.sqrt(dt)
    ks = ks_one_sample(dw, lambda v: norm.cdf(v / sd), alpha=alpha)
    ks.name = "battery_increment_normality"

    qv = float(np.sum(dw * dw))
    qv_rel = abs(qv - span) / span
    qv_rep = TestReport("battery_quadratic_variation", qv_rel, None, qv_tol,
                        qv_rel <= qv_tol, n)

    c = dw - dw.mean()
    denom = float(np.dot(c, c))
    rho = float(np.dot(c[:-1], c[1:]) / denom) if denom > 0 else 1.0
    rho_tol = 3.0 / math.sqrt(n)
    rho_rep = TestReport("battery_lag1_autocorr", rho, None, rho_tol,
                         abs(rho) <= rho_tol, n)

    comps = [ks, qv_rep, rho_rep]
    ok = all(r.pass_ for r in comps)
    return TestReport("brownian_battery", qv_rel, ks.p_value, alpha, ok, n,
                      components=comps)


def zero_set_measure(x: SamplePath, level: float = 0.0) -> float:
    """Occupation estimate of the boundary set: dt x #{grid points with X <= level}."""
    return float(x.dt * np.count_nonzero(x.values <= level))


def calibrate(run_once, n_reps: int = 100) -> float:
    """Rejection rate of a null-model check over repeated runs.

    ``run_once(rep_index)`` must return a TestReport produced from fresh
    null-model data; the result is the fraction of reports that fail.
    """
    if n_reps < 1:
        raise ConfigError("need at least one repetition")
    rejected = sum(0 if run_once(i).pass_ else 1 for i in range(n_reps))
    return rejected / n_reps
