"""Weighted analysis-L1 subproblem solver.

Solves ``argmin_x  gamma ||y - Phi x||_2^2 + sum_d lambda_d ||W_d Psi_d x||_1``
by ADMM on the splitting ``z = Psi x`` with per-row thresholds
``lambda_d(k) * w_k``: the x-update is a CG solve of the fixed normal
operator ``2 gamma Phi^H Phi + rho Psi^T Psi``, the z-update a closed-form
soft threshold.  A solver instance is single use and owns its workspace;
runs are deterministic given inputs and config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dictionaries import CompositeDictionary
from .linops import LinOp

__all__ = ["InnerConfig", "InnerState", "InnerResult", "soft_threshold",
           "cg_solve", "solve_weighted_analysis_l1"]


@dataclass
class InnerConfig:
    """Settings for one inner solve.

    ``rho`` is the ADMM splitting penalty.  When None it is chosen per solve
    so each soft threshold bites at a fixed fraction of the coefficient
    scale ``rms(|Psi x_init|)``: a scalar ``median(weights)/(c * scale)`` on
    the direct-update path, and per-row ``tau_k/(c * scale)`` on the CG path
    (equalized thresholds keep the splitting conditioned when weights span
    orders of magnitude).  The rule is a pure function of the problem data,
    so algebraically identical problems (however the weights are factored
    between ``lambda_d`` and ``W_d``) take identical iterate paths.
    ``relaxation`` is standard ADMM over-relaxation (1.0 disables).
    """

    max_iterations: int = 60
    stop_tolerance: float = 1e-6
    rho: float | None = None
    relaxation: float = 1.8
    adapt_rho: bool = False
    cg_tolerance: float = 1e-6
    cg_max_iterations: int = 400
    warm_start: "InnerState | np.ndarray | None" = None
    track_objective: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stop_tolerance <= 0 or self.cg_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.rho is not None and self.rho <= 0:
            raise ValueError("rho must be positive")
        if not 0.0 < self.relaxation < 2.0:
            raise ValueError("relaxation must lie in (0, 2)")


@dataclass
class InnerState:
    """Primal/split/dual triplet for warm-starting consecutive solves.

    ``rho`` and ``tau`` record the splitting penalty and row thresholds the
    scaled dual ``u`` belongs to, so a warm start under changed weights can
    rescale it (the optimal dual is proportional to the row threshold).
    """

    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    rho: float | None = None
    tau: np.ndarray | None = None


@dataclass
class InnerResult:
    x: np.ndarray
    iterations_used: int
    final_objective: float
    converged: bool
    state: InnerState = field(repr=False, default=None)
    objective_trace: list = field(repr=False, default_factory=list)
    fell_back: bool = False  # returned the warm start (no objective progress)


def soft_threshold(z: np.ndarray, tau) -> np.ndarray:
    """Entrywise shrinkage: magnitudes shrink by ``tau``, phases are kept."""
    tau = np.asarray(tau)
    if np.any(tau < 0):
        raise ValueError("thresholds must be nonnegative")
    if np.iscomplexobj(z):
        mag = np.abs(z)
        scale = np.maximum(mag - tau, 0.0) / np.where(mag > 0, mag, 1.0)
        return z * scale
    return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)


def cg_solve(apply_a, b: np.ndarray, cfg: InnerConfig, x0: np.ndarray | None = None) -> np.ndarray:
    """Conjugate gradients for a Hermitian positive (semi)definite map.

    Stops when ``||A x - b|| <= cfg.cg_tolerance * ||b||`` or after
    ``cfg.cg_max_iterations``.  Non-finite iterates raise, signaling a
    misconfigured operator.
    """
    b = np.asarray(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=b.dtype)
    r = b - apply_a(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    tol = cfg.cg_tolerance * bnorm
    p = r.copy()
    rs = np.vdot(r, r).real
    if np.sqrt(rs) <= tol:
        return x
    for _ in range(cfg.cg_max_iterations):
        ap = apply_a(p)
        denom = np.vdot(p, ap).real
        if not np.isfinite(denom) or denom <= 0.0:
            raise ValueError("CG breakdown: operator is not positive definite or produced non-finite values")
        alpha = rs / denom
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = np.vdot(r, r).real
        if not np.isfinite(rs_new):
            raise ValueError("CG produced non-finite residual; check the operator")
        if np.sqrt(rs_new) <= tol:
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def _row_thresholds(dictionary: CompositeDictionary, lam, weights) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape[0] != dictionary.n_bands:
        raise ValueError(f"lambda has {lam.shape[0]} entries for {dictionary.n_bands} bands")
    if np.any(lam < 0):
        raise ValueError("lambda entries must be nonnegative")
    tau = np.empty(dictionary.total_rows)
    for d in range(dictionary.n_bands):
        sl = dictionary.band_slice(d)
        if weights is None or weights[d] is None:
            tau[sl] = lam[d]
        else:
            w = np.asarray(weights[d], dtype=np.float64)
            if w.shape[0] != dictionary.band_sizes[d]:
                raise ValueError(f"weight length {w.shape[0]} != band size {dictionary.band_sizes[d]} (band {d})")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            tau[sl] = lam[d] * w
    return tau


def solve_weighted_analysis_l1(
    y: np.ndarray,
    phi: LinOp,
    dictionary: CompositeDictionary,
    lam,
    weights,
    gamma: float,
    cfg: InnerConfig | None = None,
) -> InnerResult:
    """Minimize ``gamma ||y - Phi x||^2 + sum_d lambda_d ||W_d Psi_d x||_1``.

    ``weights`` is a per-band list of diagonal weight vectors (None for
    identity).  Rows with zero effective weight carry no penalty.  The
    returned state can warm-start a subsequent solve of a nearby problem.
    """
    if cfg is None:
        cfg = InnerConfig()
    y = np.asarray(y)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite measurement vector")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if y.shape[0] != phi.rows:
        raise ValueError(f"measurement length {y.shape[0]} != operator rows {phi.rows}")
    if phi.cols != dictionary.cols:
        raise ValueError(f"operator columns {phi.cols} != dictionary columns {dictionary.cols}")

    complex_field = (
        phi.field == "complex" or np.iscomplexobj(y) or dictionary.field == "complex"
    )
    dtype = np.complex128 if complex_field else np.float64
    tau = _row_thresholds(dictionary, lam, weights)

    rhs_data = 2.0 * gamma * phi.adjoint(y)

    def objective(x, psix):
        resid = y - phi.forward(x)
        return float(gamma * np.vdot(resid, resid).real + np.dot(tau, np.abs(psix)))

    if not np.any(tau > 0):
        # unregularized limit: plain least squares via CG on the normal equations
        x = cg_solve(lambda v: 2.0 * gamma * phi.normal(v), rhs_data, cfg)
        psix = dictionary.analyze(x)
        state = InnerState(x=x, z=psix.copy(), u=np.zeros_like(psix), rho=None, tau=tau)
        return InnerResult(x=x, iterations_used=1, final_objective=objective(x, psix),
                           converged=True, state=state)

    warm = cfg.warm_start
    if isinstance(warm, InnerState):
        x = np.array(warm.x, dtype=dtype)
        z = np.array(warm.z, dtype=dtype)
        u = np.array(warm.u, dtype=dtype)
        if warm.tau is not None and not np.array_equal(warm.tau, tau):
            # the optimal scaled dual is tau/rho times a sign pattern
            u *= np.where(warm.tau > 0, tau / np.where(warm.tau > 0, warm.tau, 1.0), 1.0)
    elif warm is not None:
        x = np.array(warm, dtype=dtype)
        z = dictionary.analyze(x)
        u = np.zeros_like(z)
    else:
        x = phi.adjoint(y).astype(dtype)
        z = dictionary.analyze(x)
        u = np.zeros_like(z)

    # Direct x-update when Psi^T Psi = c I and Phi Phi^H is diagonal
    # (Woodbury) under a scalar splitting penalty; otherwise CG on the fixed
    # normal operator, where the penalty may vary per row so that every soft
    # threshold bites at the same fraction of the coefficient scale (vital
    # when per-coefficient weights span orders of magnitude).
    frame_c = dictionary.frame_constant
    gram = phi.gram_diagonal()
    direct = frame_c is not None and gram is not None

    if cfg.rho is not None:
        rho = cfg.rho
    else:
        z_scale = float(np.linalg.norm(dictionary.analyze(x)))
        z_scale /= np.sqrt(dictionary.total_rows)
        med = float(np.median(tau[tau > 0]))
        # warm starts follow a weight increase toward sparser solutions,
        # whose coefficient scale the warm iterate overestimates
        bite = 0.125 if isinstance(warm, InnerState) else 0.25
        if z_scale <= 0:
            rho = gamma * med
        elif direct:
            rho = med / (bite * z_scale)
        else:
            rho = np.where(tau > 0, tau, med) / (bite * z_scale)
    if isinstance(warm, InnerState) and warm.rho is not None:
        old = warm.rho
        if np.ndim(old) != np.ndim(rho) or not np.array_equal(old, rho):
            u *= old / rho  # keep the physical dual rho * u unchanged

    def x_update(rhs, x0):
        if direct:
            sigma = rho * frame_c
            fb = phi.forward(rhs)
            return (rhs - phi.adjoint(fb / (sigma / (2.0 * gamma) + gram))) / sigma
        return cg_solve(
            lambda v: 2.0 * gamma * phi.normal(v)
            + dictionary.synthesize(rho * dictionary.analyze(v)),
            rhs, cfg, x0=x0,
        )

    alpha = cfg.relaxation
    converged = False
    iterations = 0
    trace = []
    psix = dictionary.analyze(x)
    warm_x = x.copy() if warm is not None else None
    warm_objective = objective(x, psix) if warm is not None else None
    for it in range(1, cfg.max_iterations + 1):
        iterations = it
        rhs = rhs_data + dictionary.synthesize(rho * (z - u))
        x_new = x_update(rhs, x)
        psix = dictionary.analyze(x_new)
        z_prev = z
        relaxed = psix if alpha == 1.0 else alpha * psix + (1.0 - alpha) * z_prev
        z = soft_threshold(relaxed + u, tau / rho)
        u = u + relaxed - z
        if cfg.track_objective:
            trace.append(objective(x_new, psix))
        dx = np.linalg.norm(x_new - x)
        xn = np.linalg.norm(x_new)
        x = x_new
        # small x-steps alone can be a stall; demand split consistency too
        feasible = np.linalg.norm(psix - z) <= math.sqrt(cfg.stop_tolerance) * max(
            np.linalg.norm(psix), 1e-300
        )
        if xn > 0 and dx / xn < cfg.stop_tolerance and feasible:
            converged = True
            break
        if cfg.adapt_rho:
            rho_mid = float(np.median(rho)) if np.ndim(rho) else rho
            r_primal = np.linalg.norm(psix - z)
            r_dual = rho_mid * np.linalg.norm(dictionary.synthesize(z - z_prev))
            if r_primal > 10.0 * r_dual and rho_mid < 1e12:
                rho = rho * 2.0
                u = u / 2.0
            elif r_dual > 10.0 * r_primal and rho_mid > 1e-12:
                rho = rho / 2.0
                u = u * 2.0

    final_objective = objective(x, psix)
    fell_back = False
    if warm_objective is not None and final_objective > warm_objective:
        # monotone fallback: never end above the warm start (keeps exact
        # surrogate descent for the outer reweighting loops); the split and
        # dual are kept so a follow-up solve continues where this one left off
        x = warm_x
        final_objective = warm_objective
        fell_back = True
    state = InnerState(x=x.copy(), z=z.copy(), u=u.copy(), rho=rho, tau=tau)
    return InnerResult(x=x, iterations_used=iterations,
                       final_objective=final_objective,
                       converged=converged, state=state, objective_trace=trace,
                       fell_back=fell_back)
