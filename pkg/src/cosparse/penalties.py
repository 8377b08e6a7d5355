"""Penalty evaluators, surrogate certificates, and diagnostic checks.

Everything here is a pure function used by tests, the certificate suite,
and the recovery traces.  Penalty values that diverge to minus infinity
(zero bands with zero guards) are reported through an explicit flag rather
than a floating-point infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dictionaries import CompositeDictionary

__all__ = [
    "PenaltyValue",
    "LiftedPoint",
    "lift",
    "eval_rls",
    "eval_rlsl",
    "eval_l10",
    "eval_l0_l00",
    "eval_g2_co_l1",
    "grad_g2_co_l1",
    "eval_g2_co_irw",
    "grad_g2_co_irw",
    "check_majorization_co_l1",
    "check_majorization_co_irw",
    "co_l1_lipschitz_bound",
    "co_irw_scalar_lipschitz_bound",
    "logsum_l0_gap",
    "log_prior",
]


@dataclass(frozen=True)
class PenaltyValue:
    """A penalty evaluation that may be minus infinity.

    ``finite`` is False when a zero band with zero guards drives the value
    to minus infinity; ``value`` is then meaningless.  ``float()`` maps the
    flag to ``-inf`` for diagnostics.
    """

    value: float
    finite: bool = True

    def __float__(self) -> float:
        return self.value if self.finite else -math.inf


@dataclass(frozen=True)
class LiftedPoint:
    """Signal plus nonnegative slack magnitudes bounding its coefficients.

    Feasible when ``u >= |Psi x|`` entrywise; the lifted variable is
    ``v = [u; x]``.
    """

    x: np.ndarray
    u: np.ndarray

    def is_feasible(self, dictionary: CompositeDictionary, tol: float = 1e-12) -> bool:
        if np.any(self.u < 0):
            return False
        return bool(np.all(self.u >= np.abs(dictionary.analyze(self.x)) - tol))


def lift(x: np.ndarray, dictionary: CompositeDictionary) -> LiftedPoint:
    """Minimal feasible lift: slacks equal the coefficient magnitudes."""
    return LiftedPoint(x=np.asarray(x), u=np.abs(dictionary.analyze(x)))


def _band_values(dictionary: CompositeDictionary, vec: np.ndarray):
    return [vec[dictionary.band_slice(d)] for d in range(dictionary.n_bands)]


def eval_rls(x, dictionary: CompositeDictionary, eps: float,
             field_constants=None) -> PenaltyValue:
    """Log-sum composite penalty ``sum_d C_d L_d log(eps + ||Psi_d x||_1)``.

    ``field_constants`` defaults to all ones (the real-valued form); pass
    ``dictionary.field_constants`` for complex-band runs.
    """
    c = np.ones(dictionary.n_bands) if field_constants is None else np.asarray(field_constants)
    norms = dictionary.band_l1_norms(x)
    args = eps + norms
    if np.any(args <= 0):
        return PenaltyValue(value=0.0, finite=False)
    return PenaltyValue(value=float(np.sum(c * dictionary.band_sizes * np.log(args))))


def eval_rlsl(x, dictionary: CompositeDictionary, eps_vec, varepsilon: float) -> PenaltyValue:
    """Log-sum-log composite penalty.

    Per band ``d`` with coefficients ``z_l = |psi_{d,l}^T x|`` and scale
    ``eps_d``, contributes ``sum_l log[(eps_d (1+varep) + z_l) *
    sum_i log(1 + varep + z_i / eps_d)]``.
    """
    eps_vec = np.asarray(eps_vec, dtype=np.float64)
    if eps_vec.shape[0] != dictionary.n_bands:
        raise ValueError("eps_vec must have one entry per band")
    if np.any(eps_vec <= 0):
        raise ValueError("eps_d must be positive")
    z = np.abs(dictionary.analyze(x))
    total = 0.0
    for d, zd in enumerate(_band_values(dictionary, z)):
        inner_sum = float(np.sum(np.log1p(varepsilon + zd / eps_vec[d])))
        lin = eps_vec[d] * (1.0 + varepsilon) + zd
        if inner_sum <= 0.0 or np.any(lin <= 0):
            return PenaltyValue(value=0.0, finite=False)
        total += float(np.sum(np.log(lin)) + len(zd) * np.log(inner_sum))
    return PenaltyValue(value=total)


def _zero_tol(z: np.ndarray, tol: float | None) -> float:
    if tol is not None:
        if tol < 0:
            raise ValueError("tol must be nonnegative")
        return tol
    peak = float(np.max(np.abs(z))) if z.size else 0.0
    return 1e-8 * peak


def eval_l10(x, dictionary: CompositeDictionary, tol: float | None = None) -> float:
    """Weighted band-support count ``sum_d L_d 1{||Psi_d x||_1 > tol}``."""
    z = np.abs(dictionary.analyze(x))
    t = _zero_tol(z, tol)
    norms = np.array([zd.sum() for zd in _band_values(dictionary, z)])
    return float(np.sum(dictionary.band_sizes[norms > t]))


def eval_l0_l00(x, dictionary: CompositeDictionary, tol: float | None = None) -> float:
    """Coefficient count plus weighted band-support count."""
    z = np.abs(dictionary.analyze(x))
    t = _zero_tol(z, tol)
    total = float(np.sum(z > t))
    for d, zd in enumerate(_band_values(dictionary, z)):
        if np.any(zd > t):
            total += float(dictionary.band_sizes[d])
    return total


# ---------------------------------------------------------------------------
# Lifted concave terms and their gradients
# ---------------------------------------------------------------------------


def eval_g2_co_l1(point: LiftedPoint, dictionary: CompositeDictionary, eps: float) -> float:
    """Concave lifted term ``sum_d L_d log(eps + sum_{k in K_d} u_k)``."""
    total = 0.0
    for d, ud in enumerate(_band_values(dictionary, point.u)):
        total += float(dictionary.band_sizes[d]) * np.log(eps + ud.sum())
    return float(total)


def grad_g2_co_l1(point: LiftedPoint, dictionary: CompositeDictionary, eps: float) -> np.ndarray:
    """Gradient of :func:`eval_g2_co_l1` on ``v = [u; x]`` (zero on x)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    grad_u = np.empty(dictionary.total_rows)
    for d, ud in enumerate(_band_values(dictionary, point.u)):
        grad_u[dictionary.band_slice(d)] = dictionary.band_sizes[d] / (eps + ud.sum())
    return np.concatenate([grad_u, np.zeros(dictionary.cols)])


def eval_g2_co_irw(point: LiftedPoint, dictionary: CompositeDictionary,
                   eps_vec, varepsilon: float) -> float:
    """Concave lifted term of the log-sum-log penalty."""
    eps_vec = np.asarray(eps_vec, dtype=np.float64)
    total = 0.0
    for d, ud in enumerate(_band_values(dictionary, point.u)):
        inner = float(np.sum(np.log1p(varepsilon + ud / eps_vec[d])))
        total += dictionary.band_sizes[d] * np.log(inner)
        total += float(np.sum(np.log(eps_vec[d] * (1.0 + varepsilon) + ud)))
    return float(total)


def grad_g2_co_irw(point: LiftedPoint, dictionary: CompositeDictionary,
                   eps_vec, varepsilon: float) -> np.ndarray:
    """Gradient of :func:`eval_g2_co_irw` on ``v = [u; x]`` (zero on x)."""
    eps_vec = np.asarray(eps_vec, dtype=np.float64)
    if np.any(eps_vec <= 0):
        raise ValueError("eps_d must be positive")
    grad_u = np.empty(dictionary.total_rows)
    for d, ud in enumerate(_band_values(dictionary, point.u)):
        inner = float(np.sum(np.log1p(varepsilon + ud / eps_vec[d])))
        factor = dictionary.band_sizes[d] / inner + 1.0
        grad_u[dictionary.band_slice(d)] = factor / (eps_vec[d] * (1.0 + varepsilon) + ud)
    return np.concatenate([grad_u, np.zeros(dictionary.cols)])


def _check_majorization(eval_g2, grad_g2, anchor: LiftedPoint, probe: LiftedPoint,
                        dictionary: CompositeDictionary, gamma: float,
                        y: np.ndarray, phi, slack: float, tangency_tol: float) -> bool:
    for name, p in (("anchor", anchor), ("probe", probe)):
        if not p.is_feasible(dictionary):
            raise ValueError(f"{name} point is infeasible: u < |Psi x| somewhere")

    def g1(point):
        r = y - phi.forward(point.x)
        return float(gamma * np.vdot(r, r).real)

    g2_anchor = eval_g2(anchor)
    grad = grad_g2(anchor)

    def surrogate(point):
        dv = np.concatenate([point.u - anchor.u, point.x - anchor.x])
        return g1(point) + g2_anchor + float(grad @ dv)

    g_probe = g1(probe) + eval_g2(probe)
    if abs(surrogate(anchor) - (g1(anchor) + g2_anchor)) > tangency_tol * max(1.0, abs(g2_anchor)):
        return False
    return surrogate(probe) >= g_probe - slack * max(1.0, abs(g_probe))


def check_majorization_co_l1(anchor: LiftedPoint, probe: LiftedPoint,
                             dictionary: CompositeDictionary, eps: float,
                             gamma: float, y: np.ndarray, phi,
                             slack: float = 1e-10, tangency_tol: float = 1e-12) -> bool:
    """Tangent-plane surrogate of the lifted log-sum objective majorizes it."""
    return _check_majorization(
        lambda p: eval_g2_co_l1(p, dictionary, eps),
        lambda p: grad_g2_co_l1(p, dictionary, eps),
        anchor, probe, dictionary, gamma, y, phi, slack, tangency_tol,
    )


def check_majorization_co_irw(anchor: LiftedPoint, probe: LiftedPoint,
                              dictionary: CompositeDictionary, eps_vec,
                              varepsilon: float, gamma: float, y: np.ndarray, phi,
                              slack: float = 1e-10, tangency_tol: float = 1e-12) -> bool:
    """Same check for the log-sum-log objective's weighted-linear surrogate."""
    return _check_majorization(
        lambda p: eval_g2_co_irw(p, dictionary, eps_vec, varepsilon),
        lambda p: grad_g2_co_irw(p, dictionary, eps_vec, varepsilon),
        anchor, probe, dictionary, gamma, y, phi, slack, tangency_tol,
    )


def co_l1_lipschitz_bound(l_max: int, eps: float) -> float:
    """Squared-difference Lipschitz constant ``L_max^4 / eps^4``."""
    return float(l_max) ** 4 / float(eps) ** 4


def co_irw_scalar_lipschitz_bound(eps1: float, varepsilon: float) -> float:
    """Composed scalar (single-coefficient band) Lipschitz constant.

    Assembled from the bound chain for the log-sum-log gradient:
    the direct term contributes ``1/eps1^4`` and the log-quotient terms
    ``2/(eps1^4 log(1+varep)^4) + 2/(eps1^4 log(1+varep)^2)``, all doubled
    by the squared triangle inequality.
    """
    if eps1 <= 0 or varepsilon <= 0:
        raise ValueError("eps1 and varepsilon must be positive")
    lg = math.log1p(varepsilon)
    return (2.0 / eps1**2) * (
        1.0 / eps1**2 + 2.0 * (1.0 / (lg**4 * eps1**2) + 1.0 / (eps1**2 * lg**2))
    )


def grad_g2_co_irw_scalar(v: float, eps1: float, varepsilon: float) -> float:
    """Single-coefficient-band gradient (the L = 1 case of the lifted term)."""
    return (1.0 / math.log1p(varepsilon + v / eps1) + 1.0) / (eps1 * (1.0 + varepsilon) + v)


# ---------------------------------------------------------------------------
# Log-sum to L0 gap diagnostic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GapRow:
    eps: float
    gamma_prime: float
    residual: float


@dataclass(frozen=True)
class GapTable:
    rows: tuple
    monotone_decreasing: bool
    support_size: int

    @property
    def final_residual(self) -> float:
        return self.rows[-1].residual


def logsum_l0_gap(x, gamma: float, eps_sequence) -> GapTable:
    """Residual of the log-sum/L0 decomposition along a shrinking guard.

    For each ``eps`` the scaled log-sum objective splits into
    ``gamma' ||y - Phi x||^2 + ||x||_0 - N + residual`` with
    ``residual = sum_{n: x_n != 0} log(eps + |x_n|) / log(1/eps)``; the
    residual magnitude shrinks to zero as ``eps`` does.
    """
    x = np.asarray(x)
    eps_sequence = np.asarray(eps_sequence, dtype=np.float64)
    if np.any(eps_sequence >= 1.0) or np.any(eps_sequence <= 0.0):
        raise ValueError("eps values must lie in (0, 1)")
    if np.any(np.diff(eps_sequence) >= 0):
        raise ValueError("eps_sequence must be strictly decreasing")
    nz = np.abs(x[x != 0])
    rows = []
    for eps in eps_sequence:
        denom = np.log(1.0 / eps)
        residual = float(np.sum(np.log(eps + nz)) / denom) if nz.size else 0.0
        rows.append(GapRow(eps=float(eps), gamma_prime=float(gamma / denom), residual=residual))
    mags = [abs(r.residual) for r in rows]
    monotone = all(b <= a + 1e-15 for a, b in zip(mags, mags[1:]))
    return GapTable(rows=tuple(rows), monotone_decreasing=monotone, support_size=int(nz.size))


# ---------------------------------------------------------------------------
# Per-band log-prior for the joint (lambda, eps) estimator
# ---------------------------------------------------------------------------


def log_prior(z_abs: np.ndarray, lam: float, eps_d: float, varepsilon: float,
              field: str) -> float:
    """Per-band log-prior, up to an additive constant.

    Real field (``lam`` in (1, inf)):
    ``L log(lam - 1) - L log(eps_d) - lam * sum_l log(1 + varep + z_l/eps_d)``.
    Complex field (``lam`` in (2, inf)):
    ``L log((lam-1)(lam-2)) - 2 L log(eps_d) - lam * sum_l log(...)``.
    The dropped constants are ``-L log 2`` (real) and ``-L log(2 pi)``
    (complex); oracle comparisons must be shift-aware.
    """
    z_abs = np.asarray(z_abs, dtype=np.float64)
    if eps_d <= 0:
        raise ValueError("eps_d must be positive")
    if field == "real":
        if lam <= 1.0:
            raise ValueError(f"lambda={lam} outside the real-field domain (1, inf)")
        shape_term = math.log(lam - 1.0) - math.log(eps_d)
    elif field == "complex":
        if lam <= 2.0:
            raise ValueError(f"lambda={lam} outside the complex-field domain (2, inf)")
        shape_term = math.log(lam - 1.0) + math.log(lam - 2.0) - 2.0 * math.log(eps_d)
    else:
        raise ValueError(f"invalid field {field!r}")
    q_sum = float(np.sum(np.log1p(varepsilon + z_abs / eps_d)))
    return len(z_abs) * shape_term - lam * q_sum
