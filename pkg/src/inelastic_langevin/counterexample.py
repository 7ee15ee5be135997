"""Deterministic non-uniqueness example: one smooth force, two solutions.

Two interlaced geometric node families s_n = 4^n and t_n = 2*4^n carry
piecewise-linear convex envelopes alpha and beta interpolating u^p at
their own nodes (p = k + 3).  A single polynomial phi is built on the
base octave [1, 4] that touches alpha exactly at u = 1 (value and
right slope), touches beta exactly at u = 2, satisfies the self-similar
gluing phi^(l)(4-) = 4^(p-l) phi^(l)(1+) for l = 0..p, and stays strictly
below min(alpha, beta) elsewhere; it extends to (0, infinity) by
phi(4u) = 4^p phi(u).  Then X = alpha - phi and X = beta - phi both solve
the constrained dynamics under the single force F = -phi'', with impulse
measures alpha-dot and beta-dot respectively, and they differ (by 70 at
u = 2 for k = 1).

Construction notes:

* contacts are imposed through a Hermite base plus the double-root factor
  (u-1)^2 (u-2)^2, so contact values and slopes are satisfied bitwise,
  not as solved constraints;
* the gluing rows are solved by least squares; the leftover null-space
  freedom is spent by two linear programs (maximize the inequality
  margin, then minimize the sup of the fourth derivative at half that
  margin), and the strict inequality is audited on a dense grid;
* evaluation reduces u to the base octave and rescales by exact powers of
  two, so self-similarity identities hold bitwise and every contact node
  4^n, 2*4^n inherits the base contact exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as ncheb
from numpy.polynomial import polynomial as npoly
from scipy.linalg import null_space
from scipy.optimize import linprog

from .errors import ConfigError, FitError

__all__ = [
    "CounterexampleSpec",
    "PhiFunction",
    "alpha_eval",
    "beta_eval",
    "alpha_slope",
    "beta_slope",
    "build_phi",
    "force",
    "candidate_solutions",
    "verify_inclusion",
    "divergence",
]

_AUDIT_PER_OCTAVE = 10_000
_CONTACT_EXCLUSION = 2e-3


@dataclass(frozen=True)
class CounterexampleSpec:
    """Regularity index and evaluation window for the example.

    ``growth`` is a hook for the general strictly convex node profile; only
    the default power law c(u) = u^(k+3) is supported by the self-similar
    construction (and the only one tested), so build_phi rejects others.
    """

    k: int = 1
    n_min: int = -5
    n_max: int = 1
    points_per_octave: int = 4096
    growth: object = None

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError(f"regularity index k must be >= 0, got {self.k}")
        if self.n_min >= self.n_max:
            raise ConfigError("need n_min < n_max")
        if self.n_min < -30:
            raise ConfigError("n_min < -30 underflows the node scale")

    @property
    def p(self) -> int:
        return self.k + 3

    def s_nodes(self) -> np.ndarray:
        """Contact nodes of alpha inside the window: 4^n."""
        return 4.0 ** np.arange(self.n_min, self.n_max + 1)

    def t_nodes(self) -> np.ndarray:
        """Contact nodes of beta inside the window: 2*4^n."""
        return 2.0 * 4.0 ** np.arange(self.n_min, self.n_max)

    def grid(self) -> np.ndarray:
        out = []
        for n in range(self.n_min, self.n_max):
            lo, hi = 4.0 ** n, 4.0 ** (n + 1)
            out.append(np.linspace(lo, hi, self.points_per_octave, endpoint=False))
        out.append(np.array([4.0 ** self.n_max]))
        return np.concatenate(out)


def _octave_of(u) -> np.ndarray:
    """m with u in [4^m, 4^(m+1)); exact at powers of four."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0):
        raise ConfigError("evaluation points must be positive")
    return np.floor(np.log2(u) / 2.0 + 1e-14).astype(int)


def alpha_eval(u, spec: CounterexampleSpec) -> np.ndarray:
    """Piecewise-linear convex interpolant of u^p at the nodes 4^n.

    Node values and slopes use the exact scale form, and the dtype of u is
    preserved (extended precision is used by the free-flight check).
    """
    u = np.asarray(u)
    if u.dtype.kind != "f":
        u = u.astype(float)
    one = np.asarray(1.0, dtype=u.dtype)
    p = spec.p
    m = _octave_of(u.astype(float))
    lo = (4.0 * one) ** m
    val_lo = lo ** p
    slope = ((4.0 * one) ** (p - 1)) ** m * (((4.0 * one) ** p - one) / (3.0 * one))
    return val_lo + (u - lo) * slope


def alpha_slope(u, spec: CounterexampleSpec, side: str = "+") -> np.ndarray:
    """Right (or left) slope of alpha; the scale form 4^((p-1)n) (4^p-1)/3."""
    u = np.asarray(u, dtype=float)
    m = _octave_of(u)
    if side == "-":
        at_node = u == 4.0 ** m
        m = np.where(at_node, m - 1, m)
    return (4.0 ** (spec.p - 1.0)) ** m * ((4.0 ** spec.p - 1.0) / 3.0)


def beta_eval(u, spec: CounterexampleSpec) -> np.ndarray:
    """Piecewise-linear convex interpolant of u^p at the nodes 2*4^n."""
    u = np.asarray(u)
    if u.dtype.kind != "f":
        u = u.astype(float)
    one = np.asarray(1.0, dtype=u.dtype)
    p = spec.p
    # piece [2*4^(m-1), 2*4^m] containing u: m = ceil(log4(u/2))
    m = np.ceil(np.log2(u.astype(float) / 2.0) / 2.0 - 1e-14).astype(int)
    lo = 2.0 * (4.0 * one) ** (m - 1)
    val_lo = lo ** p
    slope = ((4.0 * one) ** (p - 1)) ** m * (((2.0 * one) ** p - (2.0 * one) ** -p) / (1.5 * one))
    return val_lo + (u - lo) * slope


def beta_slope(u, spec: CounterexampleSpec, side: str = "+") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    m = np.ceil(np.log2(u / 2.0) / 2.0 - 1e-14).astype(int)
    if side == "+":
        at_node = u == 2.0 * 4.0 ** m
        m = np.where(at_node, m + 1, m)
    return (4.0 ** (spec.p - 1.0)) ** m * ((2.0 ** spec.p - 2.0 ** -spec.p) / 1.5)


# (u-1)^2 (u-2)^2 and its derivatives, ascending power basis; the integer
# coefficients make the double zeros at 1 and 2 exact in floating point
_FAC_DERIVS = [
    np.array([4.0, -12.0, 13.0, -6.0, 1.0]),
    np.array([-12.0, 26.0, -18.0, 4.0]),
    np.array([26.0, -36.0, 12.0]),
    np.array([-36.0, 24.0]),
    np.array([24.0]),
]
_BINOM = [[math.comb(l, i) for i in range(l + 1)] for l in range(24)]


def _hermite_eval(c: np.ndarray, v, order: int):
    """Derivatives of c0 + c1 z + c2 z^2 + c3 z^2 (z-1) with z = v - 1.

    The nested forms keep the contact values at z = 0 and z = 1 exact.
    """
    z = v - 1.0
    c0, c1, c2, c3 = c
    if order == 0:
        return c0 + z * (c1 + z * (c2 + c3 * (z - 1.0)))
    if order == 1:
        return c1 + z * (2.0 * c2 + c3 * (3.0 * z - 2.0))
    if order == 2:
        return 2.0 * c2 + c3 * (6.0 * z - 2.0)
    if order == 3:
        return 6.0 * c3 + 0.0 * z
    return 0.0 * z


_Z_CENTER = 2.5
_Z_SCALE = 1.5


def _basis_matrix(v: np.ndarray, n_q: int, order: int) -> np.ndarray:
    """Order-th derivative of the basis fac(v) T_j(z), z = (v - 2.5)/1.5."""
    v = np.asarray(v, dtype=float)
    z = (v - _Z_CENTER) / _Z_SCALE
    out = np.zeros((v.size, n_q))
    for i in range(min(order, 4) + 1):
        fv = npoly.polyval(v, _FAC_DERIVS[i])
        m = order - i
        scale = _BINOM[order][i] / _Z_SCALE ** m
        for j in range(n_q):
            e = np.zeros(j + 1)
            e[j] = 1.0
            d = ncheb.chebder(e, m) if m else e
            if d.size:
                out[:, j] += scale * fv * ncheb.chebval(z, d)
    return out


def _free_factor_eval(q: np.ndarray, v, j_order: int):
    """(d/dv)^j of Q((v - 2.5)/1.5), Q in the Chebyshev basis of z.

    The centered Chebyshev representation keeps every evaluation term at
    the coefficient scale, so the intrinsic noise of a value is eps times
    the function scale rather than eps times a blown-up term.
    """
    dtype = np.asarray(v).dtype
    z = (v - np.asarray(_Z_CENTER, dtype=dtype)) / np.asarray(_Z_SCALE, dtype=dtype)
    qd = ncheb.chebder(q, j_order) if j_order else q
    if not np.asarray(qd).size:
        return 0.0 * z
    return ncheb.chebval(z, np.asarray(qd, dtype=dtype)) / _Z_SCALE ** j_order


@dataclass
class PhiFunction:
    """Self-similar smooth envelope: factored base polynomial plus extension.

    The base is stored as the Hermite contact part plus (u-1)^2 (u-2)^2
    times a free polynomial in the centered variable (u - 2.5)/1.5;
    evaluation keeps that factorization (Leibniz rule for derivatives), so
    the contact values and slopes at the nodes are bitwise exact at every
    scale and the evaluation noise stays at the working precision.
    """

    spec: CounterexampleSpec
    hermite: np.ndarray               # c0..c3 of the contact part
    q: np.ndarray                     # centered-variable coefficients of the free factor
    margin: float                     # achieved weighted inequality margin
    condition_number: float           # of the gluing constraint matrix
    glue_residual: float              # worst relative seam mismatch, l = 0..p
    d4_sup: float                     # sup |phi''''| on the base octave

    def base_eval(self, v, order: int = 0):
        """P^(order)(v) on the base octave, in the dtype of v."""
        out = _hermite_eval(self.hermite.astype(np.asarray(v).dtype), v, order)
        for i in range(min(order, 4) + 1):
            fd = _FAC_DERIVS[i]
            term = npoly.polyval(v, fd.astype(np.asarray(v).dtype)) * \
                _free_factor_eval(self.q, v, order - i)
            out = out + _BINOM[order][i] * term
        return out

    def eval(self, u, order: int = 0, dtype=float) -> np.ndarray:
        """phi^(order)(u) = 4^((p-order) m) P^(order)(u 4^-m) on octave m.

        Octave reduction and rescaling multiply by exact powers of two, so
        self-similarity identities hold bitwise.
        """
        u = np.asarray(u, dtype=dtype)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        p = self.spec.p
        out = np.zeros_like(u)
        if np.any(u < 0.0):
            raise ConfigError("phi is defined on [0, infinity)")
        pos = u > 0.0
        if np.any(~pos) and order > p - 1:
            raise ConfigError("phi^(l)(0) defined only for l <= k+2")
        if np.any(pos):
            m = _octave_of(u[pos].astype(float))
            v = u[pos] * np.asarray(4.0, dtype=dtype) ** (-m)
            scale = (np.asarray(4.0, dtype=dtype) ** (p - order)) ** m
            out[pos] = scale * self.base_eval(v, order)
        res = out[0] if scalar else out
        return res

    def __call__(self, u) -> np.ndarray:
        return self.eval(u, 0)


def _hermite_base(p: int) -> np.ndarray:
    """Contact coefficients c0..c3: value/slope at u = 1 (alpha) and 2 (beta)."""
    sa = (4.0 ** p - 1.0) / 3.0
    sb = (8.0 ** p - 2.0 ** p) / 6.0
    c0, c1 = 1.0, sa
    c2 = 2.0 ** p - 1.0 - sa
    c3 = sb - (c1 + 2.0 * c2)
    return np.array([c0, c1, c2, c3])


def build_phi(spec: CounterexampleSpec) -> PhiFunction:
    """Constrained fit of the base polynomial on [1, 4].

    Raises FitError naming the violated constraint when the configured
    degree cannot satisfy the inequality audit.
    """
    if spec.growth is not None:
        raise FitError(
            "general growth profiles break the self-similar extension; "
            "only the default power law is supported"
        )
    p = spec.p
    herm = _hermite_base(p)
    n_q = (2 * p + 3) - 4 + 1  # total degree 2p + 3

    rows, rhs = [], []
    for l in range(p + 1):
        scale = 4.0 ** (p - l)
        row = (_basis_matrix(np.array([4.0]), n_q, l)
               - scale * _basis_matrix(np.array([1.0]), n_q, l))[0]
        rhs.append(-(_hermite_eval(herm, 4.0, l) - scale * _hermite_eval(herm, 1.0, l)))
        rows.append(row)
    mat, vec = np.array(rows), np.array(rhs)
    sol0, *_ = np.linalg.lstsq(mat, vec, rcond=None)
    sv = np.linalg.svd(mat, compute_uv=False)
    cond = float(sv[0] / sv[-1])
    nsp = null_space(mat)
    ndof = nsp.shape[1]
    if ndof == 0:
        raise FitError("gluing constraints left no freedom at the configured degree")

    u = np.linspace(1.0, 4.0, 3001)
    sa = (4.0 ** p - 1.0) / 3.0
    sb0 = (2.0 ** p - 2.0 ** -p) / 1.5
    sb = (8.0 ** p - 2.0 ** p) / 6.0
    alpha = 1.0 + (u - 1.0) * sa
    beta = np.where(u <= 2.0, 2.0 ** p + (u - 2.0) * sb0, 2.0 ** p + (u - 2.0) * sb)
    envelope = np.minimum(alpha, beta)
    bmat = _basis_matrix(u, n_q, 0)
    phi0 = _hermite_eval(herm, u, 0) + bmat @ sol0
    weight = (u - 1.0) ** 2 * (u - 2.0) ** 2 * (4.0 - u)
    weight /= weight.max()

    a1 = np.hstack([bmat @ nsp, weight[:, None]])
    b1 = envelope - phi0
    r1 = None
    for box_factor in (1e2, 1e4, 1e6):
        box = box_factor * (1.0 + float(np.abs(sol0).max()))
        bounds = [(-box, box)] * ndof + [(0.0, None)]
        r1 = linprog(np.concatenate([np.zeros(ndof), [-1.0]]), A_ub=a1, b_ub=b1,
                     bounds=bounds, method="highs")
        if r1.status == 0 and r1.x[-1] > 0.0:
            break
    if r1.status != 0 or r1.x[-1] <= 0.0:
        raise FitError(
            "strict inequality phi < min(alpha, beta) infeasible at degree "
            f"{2 * p + 3} (margin LP status {r1.status})"
        )
    t_star = float(r1.x[-1])

    d4b = _basis_matrix(u, n_q, 4)
    d4h0 = d4b @ sol0  # the contact cubic has no fourth derivative
    a2 = np.vstack([
        np.hstack([bmat @ nsp, np.zeros((u.size, 1))]),
        np.hstack([d4b @ nsp, -np.ones((u.size, 1))]),
        np.hstack([-d4b @ nsp, -np.ones((u.size, 1))]),
    ])
    b2 = np.concatenate([envelope - phi0 - 0.5 * t_star * weight, -d4h0, d4h0])
    r2 = linprog(np.concatenate([np.zeros(ndof), [1.0]]), A_ub=a2, b_ub=b2,
                 bounds=bounds, method="highs")
    coeffs = r2.x[:ndof] if r2.status == 0 else r1.x[:ndof]
    q = npoly.polyadd(sol0, nsp @ coeffs)
    achieved = t_star if r2.status != 0 else 0.5 * t_star
    phi = PhiFunction(spec, herm, np.asarray(q, dtype=float), achieved, cond, 0.0, 0.0)

    # audit: strict inequality off the contacts, curvature signs at them
    fine = np.linspace(1.0, 4.0, _AUDIT_PER_OCTAVE * 3 + 1)
    alpha_f = 1.0 + (fine - 1.0) * sa
    beta_f = np.where(fine <= 2.0, 2.0 ** p + (fine - 2.0) * sb0,
                      2.0 ** p + (fine - 2.0) * sb)
    phi_f = phi.base_eval(fine, 0)
    gap = np.minimum(alpha_f, beta_f) - phi_f
    off = ((np.abs(fine - 1.0) > _CONTACT_EXCLUSION)
           & (np.abs(fine - 2.0) > _CONTACT_EXCLUSION)
           & (np.abs(fine - 4.0) > _CONTACT_EXCLUSION))
    if float(gap[off].min()) <= 0.0:
        at = float(fine[off][int(np.argmin(gap[off]))])
        raise FitError(f"envelope inequality violated on the audit grid at u = {at:.6f}")
    if phi.base_eval(1.0, 2) >= 0.0 or phi.base_eval(2.0, 2) >= 0.0:
        raise FitError("tangency requires strictly negative curvature at the contacts")

    glue = 0.0
    for l in range(p + 1):
        left = float(phi.base_eval(4.0, l))
        right = 4.0 ** (p - l) * float(phi.base_eval(1.0, l))
        glue = max(glue, abs(left - right) / max(1.0, abs(right)))
    phi.glue_residual = float(glue)
    phi.d4_sup = float(np.max(np.abs(phi.base_eval(fine, 4))))
    return phi


def force(u, phi: PhiFunction) -> np.ndarray:
    """External force F = -phi''; F(0) = 0 (the limit forced by the scaling)."""
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    out = np.zeros_like(u)
    pos = u > 0.0
    out[pos] = -phi.eval(u[pos], 2)
    if np.any(u < 0.0):
        raise ConfigError("the force is defined on [0, infinity)")
    return out[0] if scalar else out


@dataclass
class Candidate:
    """One explicit solution: node family, position, and velocity evaluators."""

    name: str
    nodes: np.ndarray
    envelope: callable
    slope: callable

    def position(self, u, phi: PhiFunction, dtype=float) -> np.ndarray:
        u = np.asarray(u, dtype=dtype)
        return self.envelope(u) - phi.eval(u, 0, dtype=dtype)

    def velocity(self, u, phi: PhiFunction, side: str = "+") -> np.ndarray:
        return self.slope(u, side) - phi.eval(u, 1)


def candidate_solutions(spec: CounterexampleSpec, phi: PhiFunction) -> tuple[Candidate, Candidate]:
    """The two distinct solutions driven by the same force."""
    x_alpha = Candidate(
        "alpha", spec.s_nodes(),
        lambda u: alpha_eval(u, spec),
        lambda u, side="+": alpha_slope(u, spec, side),
    )
    x_beta = Candidate(
        "beta", spec.t_nodes(),
        lambda u: beta_eval(u, spec),
        lambda u, side="+": beta_slope(u, spec, side),
    )
    return x_alpha, x_beta


def _second_difference(candidate: Candidate, phi: PhiFunction, u: np.ndarray,
                       h: np.ndarray) -> np.ndarray:
    """Fourth-order five-point stencil for X'' from values.

    Evaluation runs in extended precision and the step is octave-scaled
    (h is per-point), so both the cancellation noise and the truncation
    stay uniformly small across the self-similar cascade.
    """
    u_ld = u.astype(np.longdouble)
    h_ld = h.astype(np.longdouble)
    vals = [candidate.position(u_ld + s * h_ld, phi, dtype=np.longdouble)
            for s in (-2.0, -1.0, 0.0, 1.0, 2.0)]
    num = -vals[0] + 16.0 * vals[1] - 30.0 * vals[2] + 16.0 * vals[3] - vals[4]
    return (num / (12.0 * h_ld * h_ld)).astype(float)


def verify_inclusion(candidate: Candidate, phi: PhiFunction, tol: float,
                     second_diff_step: float = 4e-4) -> dict:
    """Check one candidate against the constrained dynamics.

    (a) X >= 0 on the audit grid; (b) zero contact value and zero right
    velocity at each node in range; (c) away from nodes, the second
    difference of X equals the force within tol; (d) at each node the
    velocity jump equals the negated incoming velocity.  Returns the max
    residual per check; raises GateError-style dict flag instead of
    raising so callers can report.
    """
    spec = phi.spec
    u = spec.grid()
    x = candidate.position(u, phi)
    res_a = float(max(0.0, -x.min()))

    nodes = candidate.nodes
    nodes = nodes[(nodes >= u[0]) & (nodes <= u[-1])]
    contact = np.abs(candidate.position(nodes, phi))
    v_plus = candidate.velocity(nodes, phi, "+")
    res_b = float(max(contact.max(), np.abs(v_plus).max())) if nodes.size else 0.0

    # per-point step scaled to the octave; keep the stencil clear of the
    # envelope kinks and of the self-similar seams
    h_loc = second_diff_step * 4.0 ** _octave_of(u).astype(float)
    away = np.ones(u.size, dtype=bool)
    for nd in np.concatenate([nodes, 4.0 ** np.arange(spec.n_min, spec.n_max + 1)]):
        away &= np.abs(u - nd) > 6.0 * second_diff_step * max(nd, 1e-300)
    away &= (u - 2.0 * h_loc) > 0.0
    d2x = _second_difference(candidate, phi, u[away], h_loc[away])
    res_c = float(np.max(np.abs(d2x - force(u[away], phi))))

    v_minus = candidate.velocity(nodes, phi, "-")
    jump = v_plus - v_minus
    res_d = float(np.max(np.abs(jump - (-v_minus)))) if nodes.size else 0.0

    checks = {"a_nonnegative": res_a, "b_contact": res_b,
              "c_free_flight": res_c, "d_jump": res_d}
    failed = [name for name, r in checks.items() if r > tol]
    return {
        "residuals": checks,
        "tol": tol,
        "pass": not failed,
        "failed": failed,
        "name": candidate.name,
    }


def divergence(spec: CounterexampleSpec, phi: PhiFunction) -> dict:
    """Separation of the two candidates: sup over the grid and the value at u = 2."""
    xa, xb = candidate_solutions(spec, phi)
    u = spec.grid()
    gap = np.abs(xa.position(u, phi) - xb.position(u, phi))
    at2 = float(abs(xa.position(np.array(2.0), phi) - xb.position(np.array(2.0), phi)))
    return {"sup": float(gap.max()), "at_u2": at2,
            "argmax": float(u[int(np.argmax(gap))])}
