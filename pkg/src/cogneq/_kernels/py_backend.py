"""Pure-NumPy implementations of the numerical kernels.

This module is the reference semantics for the compiled core: every function
here has a bit-compatible counterpart in ``core.pyx`` (up to floating-point
reassociation).  Keep the two in sync; the parity test suite compares them on
random inputs.
"""

import math

import numpy as np

NAME = "python"

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Guard keeping false-alarm probabilities strictly inside (0, 1) before the
# tail inverse is applied; round-off can land exactly on the boundary.
PFA_GUARD = 1e-15


def qfunc(x):
    """Gaussian tail probability Q(x) = P(Z > x), Z ~ N(0, 1).

    Computed through erfc: Q(x) = erfc(x / sqrt(2)) / 2, accurate to
    ~1e-16 absolute over the whole real line.
    """
    if np.isscalar(x):
        return 0.5 * math.erfc(x / _SQRT2)
    x = np.asarray(x, dtype=float)
    return 0.5 * _erfc_arr(x / _SQRT2)


_erfc_arr = np.vectorize(math.erfc, otypes=[float])


def _phi(x):
    """Standard normal density."""
    return _INV_SQRT2PI * np.exp(-0.5 * np.square(x))


# Coefficients of the rational lower/central approximations to the inverse
# standard-normal CDF (Acklam).  Two Newton refinements on top push the
# result to ~1 ulp.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _norm_ppf_approx(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
               ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
                ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
           (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def _qinv_scalar(p):
    if not 0.0 < p < 1.0:
        raise ValueError(f"q_inverse requires 0 < p < 1, got {p}")
    # Q^{-1}(p) = -Phi^{-1}(p); rational start, then two Newton steps on Q.
    x = -_norm_ppf_approx(p)
    for _ in range(2):
        err = 0.5 * math.erfc(x / _SQRT2) - p
        x += err / (_INV_SQRT2PI * math.exp(-0.5 * x * x))
    return x


def qinv(p):
    """Inverse of ``qfunc`` on (0, 1)."""
    if np.isscalar(p):
        return _qinv_scalar(p)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("q_inverse requires 0 < p < 1")
    out = np.empty_like(p)
    flat_p = p.ravel()
    flat_o = out.ravel()
    for i in range(flat_p.size):
        flat_o[i] = _qinv_scalar(flat_p[i])
    return out


def pmiss_terms(tau_hat, pfa, sig0, sig1, dmu, order=2):
    """Missed-detection probability and its derivatives per carrier.

    With v = Q^{-1}(pfa) and s_k = (dmu_k * tau_hat - sig0_k * v) / sig1_k the
    probability is Q(s_k).  Returns (pm, d_tau, d_pfa) for ``order == 1`` and
    additionally (d_tautau, d_taupfa, d_pfapfa) for ``order == 2``.
    """
    pfa = min(max(float(pfa), PFA_GUARD), 1.0 - PFA_GUARD)
    sig0 = np.asarray(sig0, dtype=float)
    sig1 = np.asarray(sig1, dtype=float)
    dmu = np.asarray(dmu, dtype=float)
    v = _qinv_scalar(pfa)
    phiv = _INV_SQRT2PI * math.exp(-0.5 * v * v)
    s = (dmu * tau_hat - sig0 * v) / sig1
    pm = qfunc(s)
    phis = _phi(s)
    a = dmu / sig1          # ds/dtau
    b = (sig0 / sig1) / phiv  # -ds/dpfa ... sign handled below
    d_tau = -phis * a
    d_pfa = -phis * b
    if order < 2:
        return pm, d_tau, d_pfa
    # phi'(s) = -s phi(s); chain rule on s(tau, pfa)
    d_tautau = s * phis * a * a
    d_taupfa = s * phis * a * b
    # d/dpfa[ -phi(s) b ]: b depends on pfa through phi(v)
    #   db/dpfa = b * v / phiv * dv/dpfa-term equivalent: d(1/phiv)/dpfa = -v/phiv
    d_pfapfa = (s * phis * b) * b - phis * (-(v / phiv) * b)
    return pm, d_tau, d_pfa, d_tautau, d_taupfa, d_pfapfa


def project_capped_simplex(p, pmax, total):
    """Euclidean projection onto {0 <= y <= pmax, sum(y) <= total}."""
    p = np.asarray(p, dtype=float)
    y = np.clip(p, 0.0, pmax)
    if y.sum() <= total:
        return y
    lo, hi = 0.0, float(np.max(p))
    for _ in range(100):
        nu = 0.5 * (lo + hi)
        s = np.clip(p - nu, 0.0, pmax).sum()
        if s > total:
            lo = nu
        else:
            hi = nu
    return np.clip(p - hi, 0.0, pmax)


def _curve_val(t, cc, dd):
    return 0.5 * math.erfc((cc + dd * t) / _SQRT2)


def _curve_slope(t, cc, dd):
    z = cc + dd * t
    return -dd * _INV_SQRT2PI * math.exp(-0.5 * z * z)


def _project_onto_curve(t0, p0, cc, dd, tmin, tmax):
    """Stationary points of the squared distance to pfa = Q(cc + dd*t)."""
    def hprime(t):
        return (t - t0) + (_curve_val(t, cc, dd) - p0) * _curve_slope(t, cc, dd)

    roots = []
    n_scan = 32
    grid = np.linspace(tmin, tmax, n_scan + 1)
    vals = [hprime(t) for t in grid]
    for i in range(n_scan):
        va, vb = vals[i], vals[i + 1]
        if va == 0.0:
            roots.append(grid[i])
            continue
        if va * vb < 0.0:
            a, b = grid[i], grid[i + 1]
            fa = va
            for _ in range(90):
                m = 0.5 * (a + b)
                fm = hprime(m)
                if fa * fm <= 0.0:
                    b = m
                else:
                    a, fa = m, fm
            roots.append(0.5 * (a + b))
    if vals[-1] == 0.0:
        roots.append(grid[-1])
    return roots


def project_sensing_box(t0, p0, tmin, tmax, beta, ccurve, dcurve):
    """Exact Euclidean projection of (tau_hat, pfa) onto the sensing set.

    The set is {tmin <= t <= tmax, pfa <= beta, pfa >= Q(cc_k + dd_k * t)}.
    Enumerates every active-set candidate (single facet or vertex) and keeps
    the nearest feasible one, so the variational characterization of the
    projection holds to root-solve precision.
    """
    ccurve = np.asarray(ccurve, dtype=float)
    dcurve = np.asarray(dcurve, dtype=float)
    tol = 1e-11

    # unique curves only; identical sensing parameters across carriers are common
    pairs = sorted({(float(c), float(d)) for c, d in zip(ccurve, dcurve)})

    def glow(t):
        return max(_curve_val(t, c, d) for c, d in pairs)

    def feasible(t, p):
        return (tmin - tol <= t <= tmax + tol and p <= beta + tol
                and p >= glow(t) - tol)

    if feasible(t0, p0):
        return t0, p0

    cands = []
    # projection onto the box/beta polytope; if it lands in the set it wins
    tc = min(max(t0, tmin), tmax)
    pc = min(p0, beta)
    cands.append((tc, pc))
    # line-line vertices
    cands.append((tmin, beta))
    cands.append((tmax, beta))
    for c, d in pairs:
        # facet-interior stationary points on the curve
        for tr in _project_onto_curve(t0, p0, c, d, tmin, tmax):
            cands.append((tr, _curve_val(tr, c, d)))
        # curve x box / curve x beta vertices
        cands.append((tmin, _curve_val(tmin, c, d)))
        cands.append((tmax, _curve_val(tmax, c, d)))
        tb = (_qinv_scalar(beta) - c) / d
        cands.append((tb, beta))
        # curve x curve vertices
        for c2, d2 in pairs:
            if d2 != d:
                tx = (c2 - c) / (d - d2)
                cands.append((tx, _curve_val(tx, c, d)))

    best = None
    best_d2 = math.inf
    for t, p in cands:
        if not feasible(t, p):
            continue
        d2 = (t - t0) ** 2 + (p - p0) ** 2
        if d2 < best_d2:
            best_d2 = d2
            best = (t, p)
    if best is None:
        # every candidate infeasible: the set itself is empty (the curve
        # floor exceeds beta across the whole box)
        raise ValueError(
            "sensing feasible set is empty: no (tau_hat, pfa) satisfies the "
            "missed-detection caps; run the feasibility checks first")
    return best


class PlayerData:
    """Per-player snapshot of everything the inner solver needs.

    ``den0`` is sigma_hat^2 + received interference per carrier (rival powers
    frozen), ``w`` the interference weights, and the remaining fields the
    sensing-statistics and feasible-set coefficients of the player.
    """

    __slots__ = ("den0", "w", "sig0", "sig1", "dmu", "pmax", "ccurve", "dcurve",
                 "fT", "inv_sqrt_f", "c_pen", "one_minus_invQ", "avg_rest",
                 "imax", "tmin", "tmax", "beta", "ptot")

    def __init__(self, den0, w, sig0, sig1, dmu, pmax, ccurve, dcurve, fT,
                 inv_sqrt_f, c_pen, one_minus_invQ, avg_rest, imax, tmin, tmax,
                 beta, ptot):
        # writable copies: sources may be read-only scenario views
        self.den0 = np.array(den0, dtype=float)
        self.w = np.array(w, dtype=float)
        self.sig0 = np.array(sig0, dtype=float)
        self.sig1 = np.array(sig1, dtype=float)
        self.dmu = np.array(dmu, dtype=float)
        self.pmax = np.array(pmax, dtype=float)
        self.ccurve = np.array(ccurve, dtype=float)
        self.dcurve = np.array(dcurve, dtype=float)
        self.fT = float(fT)
        self.inv_sqrt_f = float(inv_sqrt_f)
        self.c_pen = float(c_pen)
        self.one_minus_invQ = float(one_minus_invQ)
        self.avg_rest = float(avg_rest)
        self.imax = float(imax)
        self.tmin = float(tmin)
        self.tmax = float(tmax)
        self.beta = float(beta)
        self.ptot = float(ptot)


def eval_obj(x, pld, lam_plus_pi):
    """Value of the player objective (Lagrangian of the minimization form).

    Returns -throughput - equi-penalty complement ... concretely:
    -log(1 - t^2/fT) - log(1 - pfa) - log(sum_k r_k) + (c/2) w1^2
    + lam_plus_pi * (sum_k pmiss_k w_k p_k - imax).
    """
    v = eval_obj_grad(x, pld, lam_plus_pi, want_grad=False)
    return v[0]


def eval_obj_grad(x, pld, lam_plus_pi, want_grad=True):
    x = np.asarray(x, dtype=float)
    n = x.size - 2
    t = x[0]
    p = x[1:1 + n]
    pf = x[-1]

    u = 1.0 - t * t / pld.fT
    if u <= 0.0 or pf >= 1.0:
        return (math.inf, None) if want_grad else (math.inf,)
    dk = pld.den0 + p
    rk = np.log1p(p / pld.den0)
    S = rk.sum()
    if S <= 0.0:
        return (math.inf, None) if want_grad else (math.inf,)

    pm, d_tau, d_pfa = pmiss_terms(t, pf, pld.sig0, pld.sig1, pld.dmu, order=1)
    wp = pld.w * p
    iq = float(pm @ wp) - pld.imax
    w1 = pld.one_minus_invQ * t * pld.inv_sqrt_f - pld.avg_rest
    val = (-math.log(u) - math.log(1.0 - pf) - math.log(S)
           + 0.5 * pld.c_pen * w1 * w1 + lam_plus_pi * iq)
    if not want_grad:
        return (val,)

    g = np.empty(n + 2)
    g[0] = (2.0 * t / pld.fT / u
            + pld.c_pen * w1 * pld.one_minus_invQ * pld.inv_sqrt_f
            + lam_plus_pi * float(d_tau @ wp))
    g[1:1 + n] = -1.0 / (S * dk) + lam_plus_pi * pm * pld.w
    g[-1] = 1.0 / (1.0 - pf) + lam_plus_pi * float(d_pfa @ wp)
    return val, g


def project_player(x, pld):
    """Projection onto the player's convex feasible set (power block and
    sensing block are separable)."""
    x = np.asarray(x, dtype=float)
    n = x.size - 2
    out = np.empty_like(x)
    out[1:1 + n] = project_capped_simplex(x[1:1 + n], pld.pmax, pld.ptot)
    t, pf = project_sensing_box(x[0], x[-1], pld.tmin, pld.tmax, pld.beta,
                                pld.ccurve, pld.dcurve)
    out[0] = t
    out[-1] = pf
    return out


def inner_solve(x0, pld, lam_plus_pi, grad_tol=1e-7, max_iter=2000,
                armijo_sigma=1e-4, backtrack=0.5, step0=1.0):
    """Projected gradient descent with Armijo backtracking.

    Minimizes the player objective over the convex feasible set.  Returns
    (x, iterations, unit-step projected-gradient residual, objective value).
    """
    x = project_player(np.asarray(x0, dtype=float), pld)
    fx, g = eval_obj_grad(x, pld, lam_plus_pi)
    if not math.isfinite(fx):
        raise ValueError("inner_solve started at a point outside the objective domain")
    step = step0
    resid = math.inf
    best_resid = math.inf
    stale = 0
    it = 0
    for it in range(1, max_iter + 1):
        xhat = project_player(x - g, pld)
        resid = float(np.linalg.norm(x - xhat))
        if resid <= grad_tol:
            break
        # near the optimum the value test saturates at float precision;
        # require the residual itself to keep improving
        if resid < 0.999 * best_resid:
            best_resid = resid
            stale = 0
        else:
            stale += 1
            if stale > 5:
                break
        s = min(step * 2.0, 1e6)
        accepted = False
        tie = 4e-16 * (1.0 + abs(fx))   # value resolution of the Armijo test
        for _ in range(60):
            xt = project_player(x - s * g, pld) if s != 1.0 else xhat
            d = xt - x
            gd = float(g @ d)
            ft = eval_obj(xt, pld, lam_plus_pi)
            if math.isfinite(ft) and ft <= fx + armijo_sigma * gd + tie:
                accepted = True
                break
            s *= backtrack
        if not accepted:
            break
        x = xt
        step = s
        fx, g = eval_obj_grad(x, pld, lam_plus_pi)
    return x, it, resid, fx
