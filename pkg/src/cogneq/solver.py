"""Per-player best response for the nonconvex problem: stationary point of
the Lagrangian over the convex set with a bisection search on the
interference multiplier, plus the closed-form regularized price update."""

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import K, PlayerData
from .constraints import feasible_set
from .network import Strategy


@dataclass
class BrConfig:
    max_outer: int = 60          # multiplier bisection steps
    max_inner: int = 4000        # projected-gradient steps per solve
    grad_tol: float = 1e-7
    comp_tol: float = 1e-7
    armijo_sigma: float = 1e-4
    backtrack: float = 0.5
    multistart: int = 1
    rng: object = field(default=None, repr=False)


@dataclass
class BrDiagnostics:
    converged: bool
    lam: float
    resid: float
    comp: float
    i_local: float
    objective: float
    inner_iters: int
    outer_iters: int
    monotone_fallback: bool = False
    message: str = ""


def player_data(q, profile, scenario, model, avg_rest=None):
    """Freeze rivals' strategies into the flat per-player evaluation data."""
    P = profile.powers()
    hq = scenario.hhat(q)
    mui = np.einsum("rk,rk->k", hq, P) - hq[q] * P[q]
    den0 = scenario.sigma_hat2(q) + mui
    if avg_rest is None:
        tau_over = profile.tau_hat_vector() / np.sqrt(model.f)
        avg_rest = (tau_over.sum() - tau_over[q]) / scenario.Q
    ys = feasible_set(q, scenario, model)
    return PlayerData(
        den0=den0, w=scenario.w[q], sig0=model.sigma0[q], sig1=model.sigma1[q],
        dmu=model.dmu[q], pmax=ys.pmax, ccurve=ys.ccurve, dcurve=ys.dcurve,
        fT=model.f[q] * model.T[q], inv_sqrt_f=1.0 / math.sqrt(model.f[q]),
        c_pen=scenario.c, one_minus_invQ=1.0 - 1.0 / scenario.Q,
        avg_rest=float(avg_rest), imax=float(scenario.Imax_local[q]),
        tmin=ys.tmin_hat, tmax=ys.tmax_hat, beta=ys.beta, ptot=ys.ptot,
    )


def project_Yq(point, q, scenario, model):
    """Exact Euclidean projection of an (N+2)-vector onto player q's set."""
    from .network import Profile
    dummy = Profile(x=[Strategy(0.0, np.zeros(scenario.N), 0.25)
                       for _ in range(scenario.Q)])
    pld = player_data(q, dummy, scenario, model, avg_rest=0.0)
    return K.project_player(np.asarray(point, dtype=float), pld)


def cold_start(pld):
    n = pld.pmax.size
    p = np.minimum(pld.ptot / n, pld.pmax)
    x = np.concatenate(([pld.tmin], p, [pld.beta]))
    return K.project_player(x, pld)


def random_start(pld, rng):
    n = pld.pmax.size
    t = rng.uniform(pld.tmin, pld.tmax)
    floor = max(K.qfunc(float(np.max(pld.ccurve + pld.dcurve * t))), 1e-12)
    pf = rng.uniform(min(floor, pld.beta), pld.beta)
    p = rng.uniform(0.0, pld.pmax)
    s = p.sum()
    if s > pld.ptot:
        p *= rng.uniform(0.5, 1.0) * pld.ptot / s
    return K.project_player(np.concatenate(([t], p, [pf])), pld)


def _i_local_at(x, pld):
    pm = K.pmiss_terms(float(x[0]), float(x[-1]), pld.sig0, pld.sig1, pld.dmu,
                       order=1)[0]
    return float(pm @ (pld.w * x[1:-1])) - pld.imax


def _objective_at(x, pld, price):
    """theta_q - price * own interference term (the quantity being maximized)."""
    val = K.eval_obj(x, pld, price)
    return -(val - price * (-pld.imax))  # undo the -Imax constant inside I_q


def minimize_lagrangian(x0, pld, lam_plus_pi, cfg):
    """argmin of L_q(., lam fixed) over the convex set from a warm start."""
    return K.inner_solve(x0, pld, lam_plus_pi, grad_tol=cfg.grad_tol,
                         max_iter=cfg.max_inner, armijo_sigma=cfg.armijo_sigma,
                         backtrack=cfg.backtrack)


def _solve_from(x_start, pld, price, lam_cap, cfg, lam_warm=None):
    """Root search on the interference multiplier around the inner solver.

    Secant steps safeguarded by bisection on the (empirically monotone)
    violation-versus-multiplier curve; an optional warm multiplier narrows
    the initial bracket.
    """
    x, it_in, resid, _ = minimize_lagrangian(x_start, pld, price, cfg)
    inner_total = it_in
    i0 = _i_local_at(x, pld)
    if i0 <= cfg.comp_tol:
        return x, 0.0, resid, inner_total, 0, False, True

    lo, i_lo, x_lo = 0.0, i0, x
    hi, i_hi, x_hi, resid_hi = None, None, None, resid
    if lam_warm is not None and 1e-12 < lam_warm <= lam_cap:
        x_w, it_in, resid_w, _ = minimize_lagrangian(x, pld,
                                                     lam_warm + price, cfg)
        inner_total += it_in
        i_w = _i_local_at(x_w, pld)
        if i_w <= cfg.comp_tol and abs(lam_warm * i_w) <= cfg.comp_tol:
            return x_w, lam_warm, resid_w, inner_total, 0, False, True
        if i_w > 0.0:
            lo, i_lo, x_lo = lam_warm, i_w, x_w
        else:
            hi, i_hi, x_hi, resid_hi = lam_warm, i_w, x_w, resid_w
    if hi is None:
        hi = lam_cap
        x_hi, it_in, resid_hi, _ = minimize_lagrangian(x_lo, pld, hi + price,
                                                       cfg)
        inner_total += it_in
        i_hi = _i_local_at(x_hi, pld)
        extend = 0
        while i_hi > cfg.comp_tol and extend < 4:
            hi *= 2.0
            x_hi, it_in, resid_hi, _ = minimize_lagrangian(x_hi, pld,
                                                           hi + price, cfg)
            inner_total += it_in
            i_hi = _i_local_at(x_hi, pld)
            extend += 1
        if i_hi > cfg.comp_tol:
            # interference cannot be driven feasible: report best iterate
            return x_hi, hi, resid_hi, inner_total, extend, False, False

    x_best, lam_best, resid_best = x_hi, hi, resid_hi
    outer = 0
    fallback = False
    for outer in range(1, cfg.max_outer + 1):
        width = hi - lo
        mid = 0.5 * (lo + hi)
        if i_lo > 0.0 > i_hi:
            secant = lo + i_lo * width / (i_lo - i_hi)
            if lo + 0.05 * width <= secant <= hi - 0.05 * width:
                mid = secant
        x_mid, it_in, resid_mid, _ = minimize_lagrangian(x_best, pld,
                                                         mid + price, cfg)
        inner_total += it_in
        i_mid = _i_local_at(x_mid, pld)
        if i_mid > i_lo + 1e-9 * (1.0 + abs(i_lo)):
            fallback = True  # monotonicity violated numerically
        if i_mid <= cfg.comp_tol and abs(mid * i_mid) <= cfg.comp_tol:
            x_best, lam_best, resid_best = x_mid, mid, resid_mid
            break
        if i_mid > 0.0:
            lo, i_lo = mid, i_mid
        else:
            hi, i_hi = mid, i_mid
            x_best, lam_best, resid_best = x_mid, mid, resid_mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return x_best, lam_best, resid_best, inner_total, outer, fallback, True


def best_response(q, profile, price, scenario, model, cfg=None, lam_cap=None,
                  avg_rest=None, lam_warm=None):
    """Best response of player q to the frozen rivals in ``profile``.

    Returns (strategy, lambda, diagnostics) where lambda is the multiplier of
    the local interference constraint, bounded by ``lam_cap`` (defaults to the
    closed-form bound from the analysis module).  avg_rest overrides the
    rivals' sensing-time average (e.g. with a consensus-computed value);
    lam_warm seeds the multiplier search from a previous solve.
    """
    cfg = cfg or BrConfig()
    if lam_cap is None:
        from .analysis import lambda_max
        lam_cap = lambda_max(scenario)
    pld = player_data(q, profile, scenario, model, avg_rest=avg_rest)

    starts = [profile.x[q].as_vector(), cold_start(pld)]
    if cfg.multistart > 1:
        rng = cfg.rng if cfg.rng is not None else np.random.default_rng(0)
        starts += [random_start(pld, rng) for _ in range(cfg.multistart - 1)]

    best = None
    for k, x_start in enumerate(starts[: max(2, cfg.multistart + 1)]):
        x, lam, resid, it_in, it_out, fb, ok = _solve_from(
            np.asarray(x_start, dtype=float), pld, price, lam_cap, cfg,
            lam_warm=lam_warm if k == 0 else None)
        obj = _objective_at(x, pld, price)
        cand = (ok, obj, x, lam, resid, it_in, it_out, fb)
        if best is None or (cand[0], cand[1]) > (best[0], best[1]):
            best = cand
        if cfg.multistart <= 1:
            break
    ok, obj, x, lam, resid, it_in, it_out, fb = best
    iq = _i_local_at(x, pld)
    diag = BrDiagnostics(
        converged=ok and resid <= 10 * cfg.grad_tol,
        lam=lam, resid=resid, comp=abs(lam * iq), i_local=iq, objective=obj,
        inner_iters=it_in, outer_iters=it_out, monotone_fallback=fb,
        message="" if ok else "multiplier search exhausted with positive interference",
    )
    return Strategy.from_vector(x), lam, diag


def price_update_regularized(price_center, i_value, prox_gain, cap):
    """Unique maximizer of mu*I - (gain/2)(mu - center)^2 over [0, cap]."""
    if prox_gain <= 0.0 or cap <= 0.0:
        raise ValueError("prox gain and cap must be positive")
    return min(max(price_center + i_value / prox_gain, 0.0), cap)
