"""Numerical certificates: checks that the implementation honors the
identities and inequalities its algorithms rely on.

Each certificate is a pure function of a seed returning a
:class:`CertificateResult`; the CLI prints one pass/fail line per
certificate and serializes failing instances for replay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dictionaries import (
    CompositeDictionary,
    concat_dictionaries,
    make_finite_difference_dictionary,
    make_owt,
    make_uwt,
)
from .inner import InnerConfig, solve_weighted_analysis_l1
from .linops import (
    IdentityOp,
    MatrixOp,
    make_finite_difference,
    make_partial_fourier_video,
    make_spread_spectrum,
    split_real,
)
from .penalties import (
    LiftedPoint,
    check_majorization_co_irw,
    check_majorization_co_l1,
    co_irw_scalar_lipschitz_bound,
    co_l1_lipschitz_bound,
    eval_g2_co_irw,
    eval_g2_co_l1,
    grad_g2_co_irw,
    grad_g2_co_irw_scalar,
    grad_g2_co_l1,
    lift,
    log_prior,
    logsum_l0_gap,
)
from .reweighting import EpsSearch, OuterConfig, estimate_lambda_eps, run_co_irw_l1_eps, run_co_l1
from .seeds import rng_from

__all__ = ["CertificateResult", "run_certificates", "CERTIFICATES"]


@dataclass
class CertificateResult:
    name: str
    passed: bool
    detail: str
    instance: dict = field(default_factory=dict)


def _adjoint_error(op, rng) -> float:
    u = rng.standard_normal(op.cols)
    if op.field == "complex":
        v = rng.standard_normal(op.rows) + 1j * rng.standard_normal(op.rows)
    else:
        v = rng.standard_normal(op.rows)
    lhs = np.vdot(v, op.forward(u))
    rhs = np.vdot(op.adjoint(v), u)
    scale = np.linalg.norm(u) * np.linalg.norm(v)
    return abs(lhs - rhs) / max(scale, 1e-300)


def cert_operator_adjoints(seed: int) -> CertificateResult:
    """Adjoint identity for every constructed operator family, 20 draws."""
    rng = rng_from(seed, 101)
    ops = {
        "spread_spectrum": make_spread_spectrum(96, 40, seed)[0],
        "spread_spectrum_split": split_real(make_spread_spectrum(96, 40, seed)[0]),
        "partial_fourier_video": make_partial_fourier_video(32, 4, 9, seed=seed)[0],
        "partial_fourier_video_split": split_real(
            make_partial_fourier_video(32, 4, 9, seed=seed)[0]
        ),
        "finite_difference_v": make_finite_difference(12, 10, "vertical"),
        "finite_difference_h": make_finite_difference(12, 10, "horizontal"),
        "owt_db2": make_owt("db2", 2, 16, 16).stacked(),
        "uwt_db1": make_uwt("db1", 1, 16, 16).stacked(),
        "concat_uwt": concat_dictionaries(
            [make_uwt("db1", 1, 16, 16), make_uwt("db2", 1, 16, 16)]
        ).stacked(),
    }
    worst_name, worst = "", 0.0
    for name, op in ops.items():
        for _ in range(20):
            err = _adjoint_error(op, rng)
            if err > worst:
                worst_name, worst = name, err
    passed = worst <= 1e-10
    return CertificateResult(
        "operator_adjoints", passed,
        f"max relative adjoint error {worst:.2e} ({worst_name}); tolerance 1e-10",
        {"seed": seed, "worst": worst_name},
    )


def cert_frame_identities(seed: int) -> CertificateResult:
    """Parseval/tight-frame identities and the full-sampling isometry."""
    rng = rng_from(seed, 102)
    failures = []

    owt = make_owt("db3", 2, 16, 16)
    x = rng.standard_normal(256)
    err = np.max(np.abs(owt.synthesize(owt.analyze(x)) - x))
    if err > 1e-10:
        failures.append(f"orthonormal wavelet Psi^T Psi error {err:.2e}")

    uwt = concat_dictionaries([make_uwt("db1", 1, 8, 8), make_uwt("db2", 1, 8, 8)])
    x = rng.standard_normal(64)
    err = np.max(np.abs(uwt.synthesize(uwt.analyze(x)) - uwt.frame_constant * x))
    if err > 1e-10:
        failures.append(f"undecimated tight-frame error {err:.2e}")

    op, _ = make_spread_spectrum(64, 64, seed, exclude_conjugate_pairs=False)
    x = rng.standard_normal(64)
    err = np.max(np.abs(op.adjoint(op.forward(x)) - x))
    if err > 1e-12:
        failures.append(f"full-sampling isometry error {err:.2e}")

    return CertificateResult(
        "frame_identities", not failures,
        "; ".join(failures) if failures else "orthonormal, tight-frame, and isometry identities hold",
        {"seed": seed},
    )


def _random_dictionary(rng, n=12):
    a = rng.standard_normal((5, n))
    b = rng.standard_normal((3, n))
    c = rng.standard_normal((1, n))
    return CompositeDictionary([MatrixOp(a), MatrixOp(b), MatrixOp(c)])


def cert_majorization(seed: int) -> CertificateResult:
    """Tangent surrogates majorize both lifted objectives (100 pairs)."""
    rng = rng_from(seed, 103)
    n = 12
    dic = _random_dictionary(rng, n)
    phi = MatrixOp(rng.standard_normal((8, n)))
    y = rng.standard_normal(8)
    eps_vec = np.array([0.7, 0.3, 1.1])
    bad = 0
    for _ in range(100):
        anchor = lift(rng.standard_normal(n), dic)
        probe = lift(rng.standard_normal(n), dic)
        # random extra slack keeps points strictly feasible
        anchor = LiftedPoint(anchor.x, anchor.u + rng.uniform(0, 0.5, anchor.u.shape))
        probe = LiftedPoint(probe.x, probe.u + rng.uniform(0, 0.5, probe.u.shape))
        if not check_majorization_co_l1(anchor, probe, dic, 0.25, 1.3, y, phi):
            bad += 1
        if not check_majorization_co_irw(anchor, probe, dic, eps_vec, 0.2, 1.3, y, phi):
            bad += 1
    return CertificateResult(
        "majorization", bad == 0,
        f"{bad} violations out of 200 surrogate checks" if bad else
        "surrogates majorize with tangency at the anchor (200 checks)",
        {"seed": seed},
    )


def cert_lipschitz(seed: int) -> CertificateResult:
    """Gradient-difference bounds for both concave lifted terms."""
    rng = rng_from(seed, 104)
    failures = []
    for l_max, eps in ((1, 0.1), (4, 0.5), (16, 1.0)):
        sizes = [l_max, max(1, l_max // 2), 1]
        n = 6
        bands = [MatrixOp(rng.standard_normal((s, n))) for s in sizes]
        dic = CompositeDictionary(bands)
        bound = co_l1_lipschitz_bound(l_max, eps)
        total = dic.total_rows
        u = rng.uniform(0.0, 3.0, size=(10000, total))
        v = rng.uniform(0.0, 3.0, size=(10000, total))
        worst = 0.0
        for a, b in ((u, v),):
            for i in range(a.shape[0]):
                pa = LiftedPoint(np.zeros(n), a[i])
                pb = LiftedPoint(np.zeros(n), b[i])
                ga = grad_g2_co_l1(pa, dic, eps)
                gb = grad_g2_co_l1(pb, dic, eps)
                num = np.sum((ga - gb) ** 2)
                den = np.sum((a[i] - b[i]) ** 2)
                if den > 0:
                    worst = max(worst, num / den)
        if worst > bound * (1 + 1e-12):
            failures.append(f"composite bound violated at (L={l_max}, eps={eps}): {worst:.3e} > {bound:.3e}")

    eps1, varep = 0.5, 0.3
    beta = co_irw_scalar_lipschitz_bound(eps1, varep)
    v = rng.uniform(0.0, 5.0, size=10000)
    w = rng.uniform(0.0, 5.0, size=10000)
    gv = np.array([grad_g2_co_irw_scalar(t, eps1, varep) for t in v])
    gw = np.array([grad_g2_co_irw_scalar(t, eps1, varep) for t in w])
    mask = v != w
    ratio = np.max((gv[mask] - gw[mask]) ** 2 / (v[mask] - w[mask]) ** 2)
    if ratio > beta * (1 + 1e-12):
        failures.append(f"scalar bound violated: {ratio:.3e} > {beta:.3e}")

    return CertificateResult(
        "lipschitz_bounds", not failures,
        "; ".join(failures) if failures else
        f"gradient-difference bounds hold (scalar ratio {ratio:.3e} <= {beta:.3e})",
        {"seed": seed},
    )


def cert_gradients(seed: int) -> CertificateResult:
    """Closed-form lifted gradients match central finite differences."""
    rng = rng_from(seed, 105)
    n = 10
    dic = _random_dictionary(rng, n)
    eps = 0.3
    eps_vec = np.array([0.4, 0.9, 0.2])
    varep = 0.25
    h = 1e-6
    worst = 0.0
    for _ in range(50):
        u = rng.uniform(0.5, 2.0, dic.total_rows)
        point = LiftedPoint(rng.standard_normal(n), u)
        for eval_fn, grad_fn in (
            (lambda p: eval_g2_co_l1(p, dic, eps), lambda p: grad_g2_co_l1(p, dic, eps)),
            (lambda p: eval_g2_co_irw(p, dic, eps_vec, varep),
             lambda p: grad_g2_co_irw(p, dic, eps_vec, varep)),
        ):
            grad = grad_fn(point)[: dic.total_rows]
            for k in rng.choice(dic.total_rows, size=3, replace=False):
                up = u.copy(); up[k] += h
                um = u.copy(); um[k] -= h
                fd = (eval_fn(LiftedPoint(point.x, up)) - eval_fn(LiftedPoint(point.x, um))) / (2 * h)
                rel = abs(fd - grad[k]) / max(abs(grad[k]), 1e-12)
                worst = max(worst, rel)
    return CertificateResult(
        "gradient_finite_difference", worst <= 1e-5,
        f"max relative gradient error {worst:.2e}; tolerance 1e-5",
        {"seed": seed},
    )


def cert_estimator(seed: int) -> CertificateResult:
    """Joint (lambda, eps) estimator attains the brute-force grid maximum."""
    rng = rng_from(seed, 106)
    failures = []
    worst_gap = 0.0
    worst_resid = 0.0
    for field_name in ("real", "complex"):
        for trial in range(10):
            size = int(rng.integers(8, 40))
            z = np.abs(rng.standard_normal(size)) * float(rng.uniform(0.1, 5.0))
            varep = float(rng.choice([0.0, 0.1]))
            lam_hat, eps_hat = estimate_lambda_eps(z, field_name, varep)
            val_hat = log_prior(z, lam_hat, eps_hat, varep, field_name)
            s = z[z > 0].mean()
            eps_grid = np.geomspace(1e-6 * s, 1e3 * s, 60)
            lam_lo = 1.0 if field_name == "real" else 2.0
            lam_grid = lam_lo + np.geomspace(1e-3, 1e3, 60)
            best = -np.inf
            for e in eps_grid:
                for lam in lam_grid:
                    best = max(best, log_prior(z, lam, e, varep, field_name))
            gap = best - val_hat
            worst_gap = max(worst_gap, gap)
            if gap > 1e-6:
                failures.append(f"{field_name} band {trial}: grid beats estimator by {gap:.2e}")
            if field_name == "complex":
                qbar = float(np.mean(np.log1p(varep + z / eps_hat)))
                resid = abs(1.0 / (lam_hat - 1.0) + 1.0 / (lam_hat - 2.0) - qbar)
                worst_resid = max(worst_resid, resid)
                if resid > 1e-8:
                    failures.append(f"complex stationarity residual {resid:.2e}")
    return CertificateResult(
        "estimator_oracle", not failures,
        "; ".join(failures[:3]) if failures else
        f"estimator beats 60x60 grids (worst gap {worst_gap:.2e}, stationarity {worst_resid:.2e})",
        {"seed": seed},
    )


def _descent_instance(seed: int):
    rng = rng_from(seed, 107)
    n1 = 12
    n = n1 * n1
    from .experiments import add_awgn, gen_finite_diff_2d

    x = gen_finite_diff_2d(3.0, 6, n1, seed)
    phi_c, _ = make_spread_spectrum(n, n // 2, seed)
    y_c, sigma2 = add_awgn(phi_c.forward(x), 40.0, seed, "complex")
    phi, y = split_real(phi_c, y_c)
    dic = make_finite_difference_dictionary(n1, n1)
    return y, phi, dic, 1.0 / sigma2


def cert_descent(seed: int, lambda_update_scale: float = 1.0) -> CertificateResult:
    """Outer objective descends and the weight updates match their formulas.

    ``lambda_update_scale`` != 1 injects a deliberate weight-update bug; the
    certificate must then fail (harness self-check).
    """
    inner = InnerConfig(max_iterations=200, stop_tolerance=1e-8, cg_tolerance=1e-8)
    failures = []
    for s in (seed, seed + 1):
        y, phi, dic, gamma = _descent_instance(s)
        cfg = OuterConfig(algorithm="co_l1", gamma=gamma, max_outer=10, epsilon=1e-3,
                          inner=inner, lambda_update_scale=lambda_update_scale)
        res = run_co_l1(y, phi, dic, cfg)
        objs = [row.objective for row in res.trace]
        for a, b in zip(objs, objs[1:]):
            if b > a + 1e-6 * max(1.0, abs(a)):
                failures.append(f"co_l1 seed {s}: objective rose {a:.8g} -> {b:.8g}")
                break
        consts = dic.field_constants
        for row in res.trace:
            expected = consts * dic.band_sizes / (cfg.epsilon + row.band_l1)
            if not np.allclose(row.lam, expected, rtol=1e-10, atol=0):
                failures.append(f"co_l1 seed {s}: weight update deviates from the descent formula")
                break

        cfg2 = OuterConfig(algorithm="co_irw_l1_eps", gamma=gamma, max_outer=10,
                           eps_d=np.full(dic.n_bands, 1e-3), varepsilon=1e-3,
                           inner=inner, lambda_update_scale=lambda_update_scale)
        res2 = run_co_irw_l1_eps(y, phi, dic, cfg2)
        objs2 = [row.objective for row in res2.trace]
        for a, b in zip(objs2, objs2[1:]):
            if b > a + 1e-6 * max(1.0, abs(a)):
                failures.append(f"co_irw_l1_eps seed {s}: objective rose {a:.8g} -> {b:.8g}")
                break
    return CertificateResult(
        "mm_descent", not failures,
        "; ".join(failures[:2]) if failures else
        "objectives nonincreasing and weight updates match the tangent formulas",
        {"seed": seed, "lambda_update_scale": lambda_update_scale},
    )


def cert_logsum_gap(seed: int) -> CertificateResult:
    """Log-sum/L0 gap residual shrinks along a decreasing guard sequence."""
    rng = rng_from(seed, 108)
    eps_seq = 10.0 ** np.arange(-2, -9, -1)
    failures = []
    for _ in range(20):
        n = int(rng.integers(20, 60))
        k = int(rng.integers(3, 9))
        x = np.zeros(n)
        support = rng.choice(n, size=k, replace=False)
        x[support] = rng.uniform(1.2, 2.0, size=k) * rng.choice([-1.0, 1.0], size=k)
        table = logsum_l0_gap(x, gamma=1.0, eps_sequence=eps_seq)
        if not table.monotone_decreasing:
            failures.append("residual magnitude not monotone")
        if abs(table.final_residual) >= 0.05 * table.support_size:
            failures.append(f"final residual {table.final_residual:.3f} vs 0.05*{table.support_size}")
    return CertificateResult(
        "logsum_l0_gap", not failures,
        "; ".join(failures[:2]) if failures else
        "gap residual decreases and ends below 0.05 * support size (20 draws)",
        {"seed": seed},
    )


def cert_solver(seed: int) -> CertificateResult:
    """Inner-solver oracles: shrinkage closed form and subgradient optimality."""
    rng = rng_from(seed, 109)
    failures = []

    n = 32
    y = rng.standard_normal(n)
    gamma = 2.0
    dic = CompositeDictionary([IdentityOp(n)])
    cfg = InnerConfig(max_iterations=500, stop_tolerance=1e-10)
    res = solve_weighted_analysis_l1(y, IdentityOp(n), dic, [1.0], None, gamma, cfg)
    from .inner import soft_threshold

    err = np.max(np.abs(res.x - soft_threshold(y, 1.0 / (2.0 * gamma))))
    if err > 1e-6:
        failures.append(f"shrinkage closed form off by {err:.2e}")

    a = rng.standard_normal((24, n))
    phi = MatrixOp(a)
    y2 = rng.standard_normal(24)
    w = rng.uniform(0.5, 2.0, n)
    lam = 0.8
    res2 = solve_weighted_analysis_l1(
        y2, phi, dic, [lam], [w], 1.5,
        InnerConfig(max_iterations=2000, stop_tolerance=1e-12, cg_tolerance=1e-12,
                    cg_max_iterations=2000),
    )
    x = res2.x
    r = 2.0 * 1.5 * (a.T @ (a @ x - y2))
    tol = 1e-4 * max(1.0, np.abs(r).max())
    active = np.abs(x) > 1e-9
    viol = np.max(np.abs(r[active] + lam * w[active] * np.sign(x[active])), initial=0.0)
    viol0 = np.max(np.abs(r[~active]) - lam * w[~active], initial=-np.inf)
    if viol > tol or viol0 > tol:
        failures.append(f"subgradient residuals {viol:.2e}/{max(viol0, 0):.2e} exceed {tol:.2e}")

    return CertificateResult(
        "inner_solver_oracles", not failures,
        "; ".join(failures) if failures else
        "shrinkage closed form and subgradient optimality hold",
        {"seed": seed},
    )


CERTIFICATES = (
    cert_operator_adjoints,
    cert_frame_identities,
    cert_majorization,
    cert_lipschitz,
    cert_gradients,
    cert_estimator,
    cert_descent,
    cert_logsum_gap,
    cert_solver,
)


def run_certificates(seed: int, lambda_update_scale: float = 1.0):
    """Run the whole suite; returns the list of results."""
    results = []
    for fn in CERTIFICATES:
        if fn is cert_descent:
            results.append(fn(seed, lambda_update_scale=lambda_update_scale))
        else:
            results.append(fn(seed))
    return results
