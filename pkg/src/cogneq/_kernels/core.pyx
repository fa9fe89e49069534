# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled counterparts of the pure-NumPy kernels in ``py_backend``.

Semantics must match ``py_backend`` exactly (up to floating-point
reassociation); the parity tests enforce this on random inputs.
"""

import math

import numpy as np

cimport numpy as cnp
from libc.math cimport erfc, exp, fabs, log, log1p, sqrt, INFINITY

NAME = "compiled"

cdef double SQRT2 = sqrt(2.0)
cdef double INV_SQRT2PI = 1.0 / sqrt(2.0 * 3.14159265358979323846)
PFA_GUARD = 1e-15
cdef double _PFA_GUARD_C = 1e-15


cdef inline double c_qfunc(double x) nogil:
    return 0.5 * erfc(x / SQRT2)


cdef inline double c_phi(double x) nogil:
    return INV_SQRT2PI * exp(-0.5 * x * x)


cdef double[6] QA = [-3.969683028665376e+01, 2.209460984245205e+02,
                     -2.759285104469687e+02, 1.383577518672690e+02,
                     -3.066479806614716e+01, 2.506628277459239e+00]
cdef double[5] QB = [-5.447609879822406e+01, 1.615858368580409e+02,
                     -1.556989798598866e+02, 6.680131188771972e+01,
                     -1.328068155288572e+01]
cdef double[6] QC = [-7.784894002430293e-03, -3.223964580411365e-01,
                     -2.400758277161838e+00, -2.549732539343734e+00,
                     4.374664141464968e+00, 2.938163982698783e+00]
cdef double[4] QD = [7.784695709041462e-03, 3.224671290700398e-01,
                     2.445134137142996e+00, 3.754408661907416e+00]


cdef double c_norm_ppf_approx(double p) nogil:
    cdef double q, r
    if p < 0.02425:
        q = sqrt(-2.0 * log(p))
        return (((((QC[0] * q + QC[1]) * q + QC[2]) * q + QC[3]) * q + QC[4]) * q + QC[5]) / \
               ((((QD[0] * q + QD[1]) * q + QD[2]) * q + QD[3]) * q + 1.0)
    if p > 1.0 - 0.02425:
        q = sqrt(-2.0 * log(1.0 - p))
        return -(((((QC[0] * q + QC[1]) * q + QC[2]) * q + QC[3]) * q + QC[4]) * q + QC[5]) / \
                ((((QD[0] * q + QD[1]) * q + QD[2]) * q + QD[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((QA[0] * r + QA[1]) * r + QA[2]) * r + QA[3]) * r + QA[4]) * r + QA[5]) * q / \
           (((((QB[0] * r + QB[1]) * r + QB[2]) * r + QB[3]) * r + QB[4]) * r + 1.0)


cdef double c_qinv(double p) nogil:
    cdef double x = -c_norm_ppf_approx(p)
    cdef double err
    cdef int i
    for i in range(2):
        err = 0.5 * erfc(x / SQRT2) - p
        x += err / (INV_SQRT2PI * exp(-0.5 * x * x))
    return x


def qfunc(x):
    if np.isscalar(x):
        return c_qfunc(<double> x)
    arr = np.asarray(x, dtype=float)
    cdef cnp.ndarray[double, ndim=1] flat = arr.ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        out[i] = c_qfunc(flat[i])
    return out.reshape(arr.shape)


def qinv(p):
    if np.isscalar(p):
        if not 0.0 < p < 1.0:
            raise ValueError(f"q_inverse requires 0 < p < 1, got {p}")
        return c_qinv(<double> p)
    arr = np.asarray(p, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("q_inverse requires 0 < p < 1")
    cdef cnp.ndarray[double, ndim=1] flat = arr.ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        out[i] = c_qinv(flat[i])
    return out.reshape(arr.shape)


def pmiss_terms(double tau_hat, double pfa, sig0, sig1, dmu, int order=2):
    cdef cnp.ndarray[double, ndim=1] s0 = np.ascontiguousarray(sig0, dtype=float)
    cdef cnp.ndarray[double, ndim=1] s1 = np.ascontiguousarray(sig1, dtype=float)
    cdef cnp.ndarray[double, ndim=1] dm = np.ascontiguousarray(dmu, dtype=float)
    cdef Py_ssize_t n = s0.shape[0]
    cdef double pf = pfa
    if pf < _PFA_GUARD_C:
        pf = _PFA_GUARD_C
    if pf > 1.0 - _PFA_GUARD_C:
        pf = 1.0 - _PFA_GUARD_C
    cdef double v = c_qinv(pf)
    cdef double phiv = c_phi(v)
    cdef cnp.ndarray[double, ndim=1] pm = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] dt = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] dp = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] dtt, dtp, dpp
    cdef double s, phis, a, b
    cdef Py_ssize_t k
    if order < 2:
        for k in range(n):
            s = (dm[k] * tau_hat - s0[k] * v) / s1[k]
            phis = c_phi(s)
            a = dm[k] / s1[k]
            b = (s0[k] / s1[k]) / phiv
            pm[k] = c_qfunc(s)
            dt[k] = -phis * a
            dp[k] = -phis * b
        return pm, dt, dp
    dtt = np.empty(n)
    dtp = np.empty(n)
    dpp = np.empty(n)
    for k in range(n):
        s = (dm[k] * tau_hat - s0[k] * v) / s1[k]
        phis = c_phi(s)
        a = dm[k] / s1[k]
        b = (s0[k] / s1[k]) / phiv
        pm[k] = c_qfunc(s)
        dt[k] = -phis * a
        dp[k] = -phis * b
        dtt[k] = s * phis * a * a
        dtp[k] = s * phis * a * b
        dpp[k] = (s * phis * b) * b - phis * (-(v / phiv) * b)
    return pm, dt, dp, dtt, dtp, dpp


cdef void c_proj_simplex(double* p, double* pmax, double total, double* out,
                         Py_ssize_t n) nogil:
    cdef double s = 0.0, hi = 0.0, lo = 0.0, nu, y
    cdef Py_ssize_t k
    cdef int it
    for k in range(n):
        y = p[k]
        if y < 0.0:
            y = 0.0
        elif y > pmax[k]:
            y = pmax[k]
        out[k] = y
        s += y
        if p[k] > hi:
            hi = p[k]
    if s <= total:
        return
    for it in range(100):
        nu = 0.5 * (lo + hi)
        s = 0.0
        for k in range(n):
            y = p[k] - nu
            if y < 0.0:
                y = 0.0
            elif y > pmax[k]:
                y = pmax[k]
            s += y
        if s > total:
            lo = nu
        else:
            hi = nu
    for k in range(n):
        y = p[k] - hi
        if y < 0.0:
            y = 0.0
        elif y > pmax[k]:
            y = pmax[k]
        out[k] = y


def project_capped_simplex(p, pmax, double total):
    cdef cnp.ndarray[double, ndim=1] pa = np.ascontiguousarray(p, dtype=float)
    cdef cnp.ndarray[double, ndim=1] pm = np.ascontiguousarray(pmax, dtype=float)
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(pa)
    c_proj_simplex(&pa[0], &pm[0], total, &out[0], pa.shape[0])
    return out


cdef inline double c_curve_val(double t, double cc, double dd) nogil:
    return 0.5 * erfc((cc + dd * t) / SQRT2)


cdef inline double c_curve_slope(double t, double cc, double dd) nogil:
    cdef double z = cc + dd * t
    return -dd * INV_SQRT2PI * exp(-0.5 * z * z)


cdef inline double c_hprime(double t, double t0, double p0, double cc,
                            double dd) nogil:
    return (t - t0) + (c_curve_val(t, cc, dd) - p0) * c_curve_slope(t, cc, dd)


cdef double c_glow(double t, double* cc, double* dd, Py_ssize_t m) nogil:
    cdef double best = -INFINITY, v
    cdef Py_ssize_t j
    for j in range(m):
        v = c_curve_val(t, cc[j], dd[j])
        if v > best:
            best = v
    return best


cdef bint c_feasible_2d(double t, double p, double tmin, double tmax,
                        double beta, double* cc, double* dd, Py_ssize_t m,
                        double tol) nogil:
    if t < tmin - tol or t > tmax + tol or p > beta + tol:
        return False
    return p >= c_glow(t, cc, dd, m) - tol


cdef int c_proj_2d(double t0, double p0, double tmin, double tmax, double beta,
                   double* cc, double* dd, Py_ssize_t m,
                   double* t_out, double* p_out) nogil:
    """Returns 0 on success, 1 when the set is empty (no feasible candidate)."""
    cdef double tol = 1e-11
    if c_feasible_2d(t0, p0, tmin, tmax, beta, cc, dd, m, tol):
        t_out[0] = t0
        p_out[0] = p0
        return 0

    cdef double best_t = 0.0, best_p = 0.0, best_d2 = INFINITY
    cdef double ct, cp, d2
    cdef Py_ssize_t j, j2, i
    cdef int nscan = 32, b
    cdef double a, bb, fa, fm, mm, va, vb, h, tr, tb

    # box/beta clip
    ct = t0
    if ct < tmin:
        ct = tmin
    elif ct > tmax:
        ct = tmax
    cp = p0 if p0 < beta else beta
    if c_feasible_2d(ct, cp, tmin, tmax, beta, cc, dd, m, tol):
        d2 = (ct - t0) * (ct - t0) + (cp - p0) * (cp - p0)
        if d2 < best_d2:
            best_d2 = d2; best_t = ct; best_p = cp
    # line-line vertices
    for b in range(2):
        ct = tmin if b == 0 else tmax
        cp = beta
        if c_feasible_2d(ct, cp, tmin, tmax, beta, cc, dd, m, tol):
            d2 = (ct - t0) * (ct - t0) + (cp - p0) * (cp - p0)
            if d2 < best_d2:
                best_d2 = d2; best_t = ct; best_p = cp

    h = (tmax - tmin) / nscan
    for j in range(m):
        # stationary points of the distance along curve j
        va = c_hprime(tmin, t0, p0, cc[j], dd[j])
        for i in range(nscan):
            a = tmin + h * i
            bb = a + h
            vb = c_hprime(bb, t0, p0, cc[j], dd[j])
            tr = INFINITY
            if va == 0.0:
                tr = a
            elif va * vb < 0.0:
                fa = va
                for b in range(90):
                    mm = 0.5 * (a + bb)
                    fm = c_hprime(mm, t0, p0, cc[j], dd[j])
                    if fa * fm <= 0.0:
                        bb = mm
                    else:
                        a = mm; fa = fm
                tr = 0.5 * (a + bb)
            if tr != INFINITY:
                ct = tr
                cp = c_curve_val(ct, cc[j], dd[j])
                if c_feasible_2d(ct, cp, tmin, tmax, beta, cc, dd, m, tol):
                    d2 = (ct - t0) * (ct - t0) + (cp - p0) * (cp - p0)
                    if d2 < best_d2:
                        best_d2 = d2; best_t = ct; best_p = cp
            va = vb
        if c_hprime(tmax, t0, p0, cc[j], dd[j]) == 0.0:
            ct = tmax
            cp = c_curve_val(ct, cc[j], dd[j])
            if c_feasible_2d(ct, cp, tmin, tmax, beta, cc, dd, m, tol):
                d2 = (ct - t0) * (ct - t0) + (cp - p0) * (cp - p0)
                if d2 < best_d2:
                    best_d2 = d2; best_t = ct; best_p = cp
        # curve x box, curve x beta vertices
        for b in range(2):
            ct = tmin if b == 0 else tmax
            cp = c_curve_val(ct, cc[j], dd[j])
            if c_feasible_2d(ct, cp, tmin, tmax, beta, cc, dd, m, tol):
                d2 = (ct - t0) * (ct - t0) + (cp - p0) * (cp - p0)
                if d2 < best_d2:
                    best_d2 = d2; best_t = ct; best_p = cp
        tb = (c_qinv(beta) - cc[j]) / dd[j]
        ct = tb; cp = beta
        if c_feasible_2d(ct, cp, tmin, tmax, beta, cc, dd, m, tol):
            d2 = (ct - t0) * (ct - t0) + (cp - p0) * (cp - p0)
            if d2 < best_d2:
                best_d2 = d2; best_t = ct; best_p = cp
        # curve x curve vertices
        for j2 in range(m):
            if dd[j2] != dd[j]:
                ct = (cc[j2] - cc[j]) / (dd[j] - dd[j2])
                cp = c_curve_val(ct, cc[j], dd[j])
                if c_feasible_2d(ct, cp, tmin, tmax, beta, cc, dd, m, tol):
                    d2 = (ct - t0) * (ct - t0) + (cp - p0) * (cp - p0)
                    if d2 < best_d2:
                        best_d2 = d2; best_t = ct; best_p = cp

    if best_d2 == INFINITY:
        t_out[0] = t0
        p_out[0] = p0
        return 1
    t_out[0] = best_t
    p_out[0] = best_p
    return 0


_EMPTY_SET_MSG = ("sensing feasible set is empty: no (tau_hat, pfa) satisfies "
                  "the missed-detection caps; run the feasibility checks first")


def project_sensing_box(double t0, double p0, double tmin, double tmax,
                        double beta, ccurve, dcurve):
    pairs = sorted({(float(c), float(d)) for c, d in zip(ccurve, dcurve)})
    cdef cnp.ndarray[double, ndim=1] cc = np.array([c for c, _ in pairs])
    cdef cnp.ndarray[double, ndim=1] dd = np.array([d for _, d in pairs])
    cdef double t_out, p_out
    if c_proj_2d(t0, p0, tmin, tmax, beta, &cc[0], &dd[0], cc.shape[0],
                 &t_out, &p_out):
        raise ValueError(_EMPTY_SET_MSG)
    return t_out, p_out


from .py_backend import PlayerData  # shared container type


cdef struct PData:
    Py_ssize_t n
    Py_ssize_t m            # number of unique curves
    double fT
    double inv_sqrt_f
    double c_pen
    double one_minus_invQ
    double avg_rest
    double imax
    double tmin
    double tmax
    double beta
    double ptot
    double lam_plus_pi
    double* den0
    double* w
    double* sig0
    double* sig1
    double* dmu
    double* pmax
    double* cc
    double* dd


cdef double c_eval(double* x, PData* pd, double* grad, bint want_grad) nogil:
    cdef Py_ssize_t n = pd.n, k
    cdef double t = x[0], pf = x[n + 1]
    cdef double u = 1.0 - t * t / pd.fT
    if u <= 0.0 or pf >= 1.0:
        return INFINITY
    cdef double S = 0.0, iq = 0.0, git = 0.0, gip = 0.0
    cdef double pfc = pf
    if pfc < _PFA_GUARD_C:
        pfc = _PFA_GUARD_C
    elif pfc > 1.0 - _PFA_GUARD_C:
        pfc = 1.0 - _PFA_GUARD_C
    cdef double v = c_qinv(pfc)
    cdef double phiv = c_phi(v)
    cdef double s, phis, a, b, pm, wp
    for k in range(n):
        S += log1p(x[1 + k] / pd.den0[k])
    if S <= 0.0:
        return INFINITY
    for k in range(n):
        s = (pd.dmu[k] * t - pd.sig0[k] * v) / pd.sig1[k]
        pm = c_qfunc(s)
        wp = pd.w[k] * x[1 + k]
        iq += pm * wp
        if want_grad:
            phis = c_phi(s)
            a = pd.dmu[k] / pd.sig1[k]
            b = (pd.sig0[k] / pd.sig1[k]) / phiv
            git += (-phis * a) * wp
            gip += (-phis * b) * wp
            grad[1 + k] = -1.0 / (S * (pd.den0[k] + x[1 + k])) \
                + pd.lam_plus_pi * pm * pd.w[k]
    iq -= pd.imax
    cdef double w1 = pd.one_minus_invQ * t * pd.inv_sqrt_f - pd.avg_rest
    cdef double val = -log(u) - log(1.0 - pf) - log(S) \
        + 0.5 * pd.c_pen * w1 * w1 + pd.lam_plus_pi * iq
    if want_grad:
        grad[0] = 2.0 * t / pd.fT / u \
            + pd.c_pen * w1 * pd.one_minus_invQ * pd.inv_sqrt_f \
            + pd.lam_plus_pi * git
        grad[n + 1] = 1.0 / (1.0 - pf) + pd.lam_plus_pi * gip
    return val


cdef int c_project(double* xin, PData* pd, double* xout) nogil:
    c_proj_simplex(xin + 1, pd.pmax, pd.ptot, xout + 1, pd.n)
    return c_proj_2d(xin[0], xin[pd.n + 1], pd.tmin, pd.tmax, pd.beta,
                     pd.cc, pd.dd, pd.m, &xout[0], &xout[pd.n + 1])


cdef void _fill_pdata(object pld, double lam_plus_pi, PData* pd,
                      double[::1] den0, double[::1] w, double[::1] sig0,
                      double[::1] sig1, double[::1] dmu, double[::1] pmax,
                      double[::1] cc, double[::1] dd):
    pd.n = den0.shape[0]
    pd.m = cc.shape[0]
    pd.fT = pld.fT
    pd.inv_sqrt_f = pld.inv_sqrt_f
    pd.c_pen = pld.c_pen
    pd.one_minus_invQ = pld.one_minus_invQ
    pd.avg_rest = pld.avg_rest
    pd.imax = pld.imax
    pd.tmin = pld.tmin
    pd.tmax = pld.tmax
    pd.beta = pld.beta
    pd.ptot = pld.ptot
    pd.lam_plus_pi = lam_plus_pi
    pd.den0 = &den0[0]
    pd.w = &w[0]
    pd.sig0 = &sig0[0]
    pd.sig1 = &sig1[0]
    pd.dmu = &dmu[0]
    pd.pmax = &pmax[0]
    pd.cc = &cc[0]
    pd.dd = &dd[0]


def _unique_curves(pld):
    pairs = sorted({(float(c), float(d)) for c, d in zip(pld.ccurve, pld.dcurve)})
    cc = np.array([c for c, _ in pairs])
    dd = np.array([d for _, d in pairs])
    return cc, dd


def eval_obj_grad(x, pld, double lam_plus_pi, bint want_grad=True):
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(x, dtype=float)
    cdef cnp.ndarray[double, ndim=1] g = np.empty_like(xa)
    cc_a, dd_a = _unique_curves(pld)
    cdef double[::1] cc = cc_a, dd = dd_a
    cdef PData pd
    _fill_pdata(pld, lam_plus_pi, &pd, pld.den0, pld.w, pld.sig0, pld.sig1,
                pld.dmu, pld.pmax, cc, dd)
    cdef double val = c_eval(&xa[0], &pd, &g[0], want_grad)
    if not want_grad:
        return (val,)
    if val == INFINITY:
        return val, None
    return val, g


def eval_obj(x, pld, double lam_plus_pi):
    return eval_obj_grad(x, pld, lam_plus_pi, want_grad=False)[0]


def project_player(x, pld):
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(x, dtype=float)
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(xa)
    cc_a, dd_a = _unique_curves(pld)
    cdef double[::1] cc = cc_a, dd = dd_a
    cdef PData pd
    _fill_pdata(pld, 0.0, &pd, pld.den0, pld.w, pld.sig0, pld.sig1,
                pld.dmu, pld.pmax, cc, dd)
    if c_project(&xa[0], &pd, &out[0]):
        raise ValueError(_EMPTY_SET_MSG)
    return out


def inner_solve(x0, pld, double lam_plus_pi, double grad_tol=1e-7,
                int max_iter=2000, double armijo_sigma=1e-4,
                double backtrack=0.5, double step0=1.0):
    cdef cnp.ndarray[double, ndim=1] x0a = np.ascontiguousarray(x0, dtype=float)
    cdef Py_ssize_t dim = x0a.shape[0]
    cdef cnp.ndarray[double, ndim=1] x = np.empty(dim)
    cdef cnp.ndarray[double, ndim=1] g = np.empty(dim)
    cdef cnp.ndarray[double, ndim=1] xhat = np.empty(dim)
    cdef cnp.ndarray[double, ndim=1] xt = np.empty(dim)
    cdef cnp.ndarray[double, ndim=1] tmp = np.empty(dim)
    cc_a, dd_a = _unique_curves(pld)
    cdef double[::1] cc = cc_a, dd = dd_a
    cdef PData pd
    _fill_pdata(pld, lam_plus_pi, &pd, pld.den0, pld.w, pld.sig0, pld.sig1,
                pld.dmu, pld.pmax, cc, dd)

    cdef double fx, ft, resid = INFINITY, s, gd, step = step0, tie
    cdef double best_resid = INFINITY
    cdef Py_ssize_t k
    cdef int it = 0, ls, accepted, stale = 0

    if c_project(&x0a[0], &pd, &x[0]):
        raise ValueError(_EMPTY_SET_MSG)
    fx = c_eval(&x[0], &pd, &g[0], True)
    if fx == INFINITY:
        raise ValueError("inner_solve started at a point outside the objective domain")

    with nogil:
        for it in range(1, max_iter + 1):
            for k in range(dim):
                tmp[k] = x[k] - g[k]
            c_project(&tmp[0], &pd, &xhat[0])
            resid = 0.0
            for k in range(dim):
                resid += (x[k] - xhat[k]) * (x[k] - xhat[k])
            resid = sqrt(resid)
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
            s = step * 2.0
            if s > 1e6:
                s = 1e6
            accepted = 0
            ft = INFINITY
            tie = 4e-16 * (1.0 + fabs(fx))  # value resolution of the Armijo test
            for ls in range(60):
                if s == 1.0:
                    for k in range(dim):
                        xt[k] = xhat[k]
                else:
                    for k in range(dim):
                        tmp[k] = x[k] - s * g[k]
                    c_project(&tmp[0], &pd, &xt[0])
                gd = 0.0
                for k in range(dim):
                    gd += g[k] * (xt[k] - x[k])
                ft = c_eval(&xt[0], &pd, NULL, False)
                if ft != INFINITY and ft <= fx + armijo_sigma * gd + tie:
                    accepted = 1
                    break
                s *= backtrack
            if not accepted:
                break
            for k in range(dim):
                x[k] = xt[k]
            step = s
            fx = c_eval(&x[0], &pd, &g[0], True)
    return x, it, resid, fx
