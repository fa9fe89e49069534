"""Explicit constants and condition checkers: the multiplier bound,
derivative bounds, Hessian floors, power floors, the single-problem and
game-level uniqueness margins, the analytic contraction matrix with its
P-matrix test, and the sampled contraction diagnostics."""

import math
from dataclasses import dataclass, field

import numpy as np

from .sensing import q_function, q_inverse
from .network import Profile

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def lambda_max(scenario):
    """Closed-form upper bound on the interference multipliers and the price.

    Sums, over players, the reciprocal of (worst-case per-carrier rate at
    full power) times (minimum noise PSD), scaled by the reciprocal of the
    smallest cap min{Imax_q, min_k pmax} over the whole network.
    """
    Q = scenario.Q
    global_min = min(
        min(scenario.Imax_local[q], scenario.pmax[q].min()) for q in range(Q))
    total = 0.0
    for q in range(Q):
        cross = sum(scenario.H[q, r] * scenario.pmax[r]
                    for r in range(Q) if r != q)
        logterm = np.log1p(scenario.H[q, q] * scenario.pmax[q]
                           / (scenario.noise[q] + cross)).min()
        total += (1.0 / global_min) / (logterm * scenario.noise[q].min())
    return float(total)


@dataclass
class DerivativeBounds:
    om_tau: np.ndarray        # (Q, N)
    om_pfa: np.ndarray
    om_mixed: np.ndarray

    def offdiag_bound(self, q, pmax):
        """Bordered nonnegative bound on the interference Hessian magnitude
        (zero power block), including the conservative factor of two."""
        n = self.om_tau.shape[1]
        U = np.zeros((n + 2, n + 2))
        mix = float(self.om_mixed[q] @ pmax)
        U[0, 1:1 + n] = self.om_tau[q]
        U[1:1 + n, 0] = self.om_tau[q]
        U[0, -1] = mix
        U[-1, 0] = mix
        U[1:1 + n, -1] = self.om_pfa[q]
        U[-1, 1:1 + n] = self.om_pfa[q]
        return 2.0 * U


def derivative_bounds(scenario, model):
    """Worst-case magnitudes of the missed-detection derivatives on the
    feasible set."""
    tau_hat_max = np.sqrt(model.f * scenario.tau_max)[:, None]
    dmu = model.dmu
    grow = np.exp(0.5 * (dmu * tau_hat_max / model.sigma0) ** 2)
    om_tau = _INV_SQRT2PI * dmu / model.sigma1
    om_pfa = (model.sigma0 / model.sigma1) * grow
    om_mixed = np.maximum(q_inverse(scenario.alpha),
                          dmu * tau_hat_max / model.sigma1) * grow
    return DerivativeBounds(om_tau=om_tau, om_pfa=om_pfa, om_mixed=om_mixed)


def pfa_floor_bound(q, scenario, model):
    """Closed-form lower bound on the feasible false-alarm probability."""
    tau_hat_max = math.sqrt(model.f[q] * scenario.tau_max[q])
    return float(np.min(q_function(model.dmu[q] * tau_hat_max / model.sigma0[q])))


def _rate_cap(q, scenario):
    """Upper bound on the rate sum of player q (no interference, full power)."""
    return float(np.log1p(scenario.pmax[q] / scenario.sigma_hat2(q)).sum())


def _diag_floors(q, scenario, model):
    """Diagonal floors of the Lagrangian Hessian over the feasible set."""
    fT = model.f[q] * model.T[q]
    smin = scenario.tau_min[q] / model.T[q]
    d_tau = (2.0 / fT) * (1.0 + smin) / (1.0 - smin) ** 2
    den = scenario.sigma_hat2(q) + sum(
        scenario.hhat(q)[r] * scenario.pmax[r] for r in range(scenario.Q))
    d_logr = (1.0 / _rate_cap(q, scenario)) / den ** 2
    d_pfa = 1.0 / (1.0 - pfa_floor_bound(q, scenario, model)) ** 2
    return d_tau, d_logr, d_pfa


def hessian_floor(q, t, scenario, model, bounds=None, lam_cap=None):
    """Entrywise comparison matrix below the Lagrangian Hessian.

    Quadratic forms of the true Hessian dominate |y|^T floor |y| at every
    feasible (strategy, multiplier, price) tuple; positive definiteness of
    the floor certifies uniqueness of the player's optimum.
    """
    bounds = bounds or derivative_bounds(scenario, model)
    if lam_cap is None:
        lam_cap = lambda_max(scenario)
    d_tau, d_logr, d_pfa = _diag_floors(q, scenario, model)
    U = bounds.offdiag_bound(q, scenario.pmax[q])
    L = np.diag(np.concatenate(([d_tau], d_logr, [d_pfa])))
    return L - 2.0 * max(t, lam_cap) * scenario.G[q].max() * U


def gamma1(q, t, scenario, model, bounds=None, lam_cap=None):
    """Row-diagonal-dominance constant of the single-problem uniqueness test."""
    bounds = bounds or derivative_bounds(scenario, model)
    if lam_cap is None:
        lam_cap = lambda_max(scenario)
    d_tau, d_logr, d_pfa = _diag_floors(q, scenario, model)
    U = bounds.offdiag_bound(q, scenario.pmax[q])
    rows = U.sum(axis=1)
    ratios = np.concatenate(([d_tau / rows[0]], d_logr / rows[1:-1],
                             [d_pfa / rows[-1]]))
    return float(2.0 * max(t, lam_cap) / ratios.min())


def _itot(q, scenario, itot=None):
    """Interference normalizer of the uniqueness conditions.

    The bound is stated against an unnamed total-interference scale; the
    per-player cap is the dimensionally consistent reading, overridable."""
    if itot is None:
        return scenario.Imax_local[q]
    return np.broadcast_to(np.asarray(itot, dtype=float), (scenario.Q,))[q]


def check_unique_best_response(scenario, model, t, itot=None):
    """Per-player sufficient condition for a unique best response."""
    lam_cap = lambda_max(scenario)
    bounds = derivative_bounds(scenario, model)
    lhs = np.array([
        gamma1(q, t, scenario, model, bounds, lam_cap)
        * scenario.G[q].max() / _itot(q, scenario, itot)
        for q in range(scenario.Q)])
    return lhs < 1.0, lhs


@dataclass
class PowerFloor:
    p_ref: np.ndarray
    pfa_ref: float
    eta_ref: float
    floor: float


def power_floor(q, t, scenario, model):
    """Lower bound on any best response's total power.

    Built from a reference tuple with at most twice the local cap of
    worst-case interference and the smallest admissible sensing time.
    """
    u = np.minimum(scenario.Pbudget[q] / scenario.N, scenario.pmax[q])
    gu = float(scenario.G[q] @ u)
    scale = 1.0 if gu <= 2.0 * scenario.Imax_local[q] \
        else 2.0 * scenario.Imax_local[q] / gu
    p_ref = scale * u

    alpha_hat = q_inverse(1.0 - scenario.alpha[q])
    th_min = math.sqrt(model.f[q] * scenario.tau_min[q])
    pfa_ref = float(np.max(q_function(
        (model.sigma1[q] * alpha_hat + model.dmu[q] * th_min) / model.sigma0[q])))

    cross = sum(scenario.hhat(q)[r] * scenario.pmax[r]
                for r in range(scenario.Q) if r != q)
    rsum = float(np.log1p(p_ref / (scenario.sigma_hat2(q) + cross)).sum())
    eta = (math.log(1.0 - scenario.tau_min[q] / model.T[q])
           + math.log(1.0 - pfa_ref) + math.log(rsum)
           - 0.5 * t * float(np.max(scenario.G[q] * p_ref)))
    floor = float(scenario.sigma_hat2(q).min() * math.exp(eta))
    return PowerFloor(p_ref=p_ref, pfa_ref=pfa_ref, eta_ref=eta, floor=floor)


def _r_min(q, scenario):
    cross = sum(scenario.hhat(q)[r] * scenario.pmax[r]
                for r in range(scenario.Q) if r != q)
    return float(np.log1p(scenario.pmax[q]
                          / (scenario.sigma_hat2(q) + cross)).min())


def _r_low(q, t, scenario, model):
    pf = power_floor(q, t, scenario, model)
    return float(scenario.sigma_hat2(q).min() * math.exp(pf.eta_ref)
                 * _r_min(q, scenario))


def xi_sup(q, t, scenario, model):
    """Spectral bound on the cross-player rate-curvature blocks."""
    rl = _r_low(q, t, scenario, model)
    rm = _r_min(q, scenario)
    inv_s4 = float(np.max(1.0 / scenario.sigma_hat2(q) ** 2))
    return (1.0 / rl) * (1.0 + inv_s4 / rm)


def _zeta(t, scenario, model):
    vals = []
    for q in range(scenario.Q):
        rl = _r_low(q, t, scenario, model)
        rm = _r_min(q, scenario)
        inv_s2 = 1.0 / scenario.sigma_hat2(q)
        vals.append(float(inv_s2.max()) * (1.0 / rl)
                    * (1.0 + float(inv_s2.sum()) / rm))
    return max(vals)


def gamma2(q, t, scenario, model, bounds=None):
    """Game-level coupling constant scaling the secondary-network MUI terms."""
    bounds = bounds or derivative_bounds(scenario, model)
    U = bounds.offdiag_bound(q, scenario.pmax[q])
    rows = U.sum(axis=1)
    row_min = min(rows[0], rows[1:-1].min(), rows[-1])
    zmax = _zeta(t, scenario, model) / (2.0 * t) / row_min
    return zmax * gamma1(q, t, scenario, model, bounds)


def check_unique_equilibrium(scenario, model, t, itot=None):
    """Sufficient condition for a unique equilibrium strategy profile."""
    bounds = derivative_bounds(scenario, model)
    lam_cap = lambda_max(scenario)
    Q = scenario.Q
    lhs = np.zeros(Q)
    for q in range(Q):
        g1 = gamma1(q, t, scenario, model, bounds, lam_cap)
        g2 = gamma2(q, t, scenario, model, bounds)
        mui = sum(
            float(np.max(scenario.H[q, r] / scenario.noise[q]))
            + float(np.max(scenario.H[r, q] / scenario.noise[r]))
            for r in range(Q) if r != q)
        lhs[q] = g1 * scenario.G[q].max() / _itot(q, scenario, itot) + g2 * mui
    return lhs < 1.0, lhs


def varsigma_up(q, t, scenario, model, bounds=None, lam_cap=None, itot=None):
    """Bound on the sensing-to-transmission cross block of the Hessian."""
    bounds = bounds or derivative_bounds(scenario, model)
    if lam_cap is None:
        lam_cap = lambda_max(scenario)
    stack = np.concatenate([bounds.om_tau[q],
                            [float(bounds.om_mixed[q] @ scenario.pmax[q])]])
    return (2.0 * max(t, lam_cap)
            * scenario.G[q].max() / _itot(q, scenario, itot)
            * float(np.linalg.norm(stack)))


def rho_low(q, t, scenario, model, bounds=None, lam_cap=None, itot=None):
    """Convexity floor of the player's Hessian split into sensing/transmit
    blocks; zero marks the analytic chain as not applicable."""
    bounds = bounds or derivative_bounds(scenario, model)
    if lam_cap is None:
        lam_cap = lambda_max(scenario)
    d_tau, _, _ = _diag_floors(q, scenario, model)
    Lbar = hessian_floor(q, t, scenario, model, bounds, lam_cap)
    lam_least = float(np.linalg.eigvalsh(Lbar[1:, 1:]).min())
    vs = varsigma_up(q, t, scenario, model, bounds, lam_cap, itot)
    B = np.array([[d_tau, -vs], [-vs, lam_least]])
    least = float(np.linalg.eigvalsh(B).min())
    return max(least, 0.0)


def _d_matrices(rho, f, c, Q):
    """Per-player block-norm scalings (squared diagonals)."""
    shift = c * ((1.0 - 1.0 / Q) / np.sqrt(f)) ** 2
    return np.stack([rho + shift, rho], axis=1)


def beta_up(scenario, model, t, c, rho=None, itot=None):
    """Analytic upper bounds on the best-response coupling coefficients."""
    Q = scenario.Q
    bounds = derivative_bounds(scenario, model)
    lam_cap = lambda_max(scenario)
    if rho is None:
        rho = np.array([rho_low(q, t, scenario, model, bounds, lam_cap, itot)
                        for q in range(Q)])
    if np.any(rho <= 0.0):
        return None, rho
    B = np.zeros((Q, Q))
    shift = (1.0 - 1.0 / Q) ** 2
    for q in range(Q):
        xs = xi_sup(q, t, scenario, model)
        for r in range(Q):
            if r == q:
                continue
            if Q > 1 and c > 0.0:
                cterm = (c / (Q - 1)) / (
                    math.sqrt(rho[q] * model.f[q] / shift + c)
                    * math.sqrt(rho[r] * model.f[r] / shift + c))
            else:
                cterm = 0.0
            cross = float(np.max(scenario.hhat(q)[r] / scenario.sigma_hat2(q) ** 2)) \
                * xs / math.sqrt(rho[q] * rho[r])
            B[q, r] = max(cterm, cross)
    return B, rho


def contraction_matrix(scenario, model, t, c, mode="analytic-low", *,
                       samples=64, rng=None, itot=None):
    """Coupling matrix of the best-response map (unit diagonal, nonpositive
    off-diagonals).

    'analytic-low' builds the certified lower bound; 'sampled' estimates the
    coupling by maximizing over random feasible profiles (diagnostic only).
    Returns (Gamma or None, rho_low vector).
    """
    B, rho = beta_up(scenario, model, t, c, itot=itot)
    if B is None:
        return None, rho
    if mode == "analytic-low":
        return np.eye(scenario.Q) - B, rho
    if mode != "sampled":
        raise ValueError(f"unknown contraction mode: {mode}")
    rng = rng or np.random.default_rng(0)
    Q = scenario.Q
    Bs = np.zeros((Q, Q))
    dq = np.sqrt(_d_matrices(rho, model.f, c, Q))
    for _ in range(samples):
        prof = random_profile(scenario, model, rng)
        P = prof.powers()
        for q in range(Q):
            hq = scenario.hhat(q)
            dall = scenario.sigma_hat2(q) + np.einsum("rk,rk->k", hq, P)
            S = float(np.log1p(P[q] / (dall - P[q])).sum())
            gq = 1.0 / dall
            for r in range(Q):
                if r == q:
                    continue
                cterm = c * (1.0 - 1.0 / Q) / math.sqrt(model.f[q]) \
                    * (1.0 / Q) / math.sqrt(model.f[r])
                d2 = np.diag(hq[r] / dall ** 2) / S
                gr = -hq[r] * P[q] / (dall * (dall - P[q]))
                M = d2 + np.outer(gq, gr) / S ** 2
                nrm = float(np.linalg.norm(M, 2))
                val = max(cterm / (dq[q, 0] * dq[r, 0]),
                          nrm / (dq[q, 1] * dq[r, 1]))
                Bs[q, r] = max(Bs[q, r], val)
    return np.eye(Q) - Bs, rho


def random_profile(scenario, model, rng):
    """Random profile with every strategy in its convex feasible set."""
    from .network import Strategy
    from .solver import player_data, random_start
    base = Profile(x=[Strategy(0.0, np.zeros(scenario.N), 0.25)
                      for _ in range(scenario.Q)])
    strategies = []
    for q in range(scenario.Q):
        pld = player_data(q, base, scenario, model, avg_rest=0.0)
        strategies.append(Strategy.from_vector(random_start(pld, rng)))
    return Profile(x=strategies)


@dataclass
class PMatrixResult:
    is_P: bool
    spectral_radius: float
    perron_weights: np.ndarray = None
    contraction: float = None


def p_matrix_test(gamma, tol=1e-10, perturb=1e-12):
    """P-matrix test for unit-diagonal Z-matrices via the spectral radius of
    the off-diagonal magnitude part; falls back to leading principal minors
    for small non-Z inputs."""
    gamma = np.asarray(gamma, dtype=float)
    Q = gamma.shape[0]
    off = gamma - np.diag(np.diag(gamma))
    is_z = np.allclose(np.diag(gamma), 1.0, atol=1e-12) and np.all(off <= 1e-12)
    if not is_z:
        if Q > 8:
            raise ValueError("non-Z input supported only up to Q = 8")
        minors = [np.linalg.det(gamma[:k, :k]) for k in range(1, Q + 1)]
        return PMatrixResult(is_P=all(m > 0 for m in minors),
                             spectral_radius=float("nan"))
    E = -off
    if not E.any():
        return PMatrixResult(is_P=True, spectral_radius=0.0,
                             perron_weights=np.ones(Q), contraction=0.0)
    Ep = E + perturb
    w = np.ones(Q)
    rho = 0.0
    for _ in range(10000):
        v = Ep @ w
        rho_new = float(v.max())
        v /= rho_new
        if np.max(np.abs(v - w)) <= tol:
            w = v
            rho = rho_new
            break
        w, rho = v, rho_new
    cb = float(np.max((E @ w) / w))
    return PMatrixResult(is_P=rho < 1.0, spectral_radius=rho,
                         perron_weights=w, contraction=cb)


def check_coupling_dominance(scenario, model, t, c, itot=None):
    """Row- or column-dominance shortcut implying the P-matrix property."""
    B, rho = beta_up(scenario, model, t, c, itot=itot)
    if B is None:
        return False, None, rho
    row_ok = bool(np.all(B.sum(axis=1) < 1.0))
    col_ok = bool(np.all(B.sum(axis=0) < 1.0))
    return row_ok or col_ok, B, rho


@dataclass
class ConditionReport:
    lambda_max: float
    t: float
    c: float
    gamma1: np.ndarray
    br_uniqueness_lhs: np.ndarray
    br_uniqueness_pass: np.ndarray
    gamma2: np.ndarray
    eq_uniqueness_lhs: np.ndarray
    eq_uniqueness_pass: bool
    rho_low: np.ndarray
    gamma_low: np.ndarray          # None when the analytic chain is inapplicable
    applicable: bool
    p_matrix: bool
    contraction_c: float
    perron_weights: np.ndarray
    dominance_pass: bool
    power_floors: np.ndarray
    binding: dict = field(default_factory=dict)

    @property
    def certified(self):
        return self.applicable and self.p_matrix

    def to_dict(self):
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, np.bool_):
                return bool(v)
            return v
        return {k: conv(getattr(self, k)) for k in self.__dataclass_fields__} | {
            "certified": bool(self.certified)}


def condition_report(scenario, model, t=None, c=None, itot=None):
    """Evaluate every certification constant and verdict for a scenario."""
    lam_cap = lambda_max(scenario)
    if t is None:
        t = 1.05 * lam_cap
    if c is None:
        c = scenario.c
    Q = scenario.Q
    bounds = derivative_bounds(scenario, model)
    g1 = np.array([gamma1(q, t, scenario, model, bounds, lam_cap)
                   for q in range(Q)])
    c1_pass, c1_lhs = check_unique_best_response(scenario, model, t, itot)
    g2 = np.array([gamma2(q, t, scenario, model, bounds) for q in range(Q)])
    c2_pass, c2_lhs = check_unique_equilibrium(scenario, model, t, itot)
    gamma_low, rho = contraction_matrix(scenario, model, t, c, itot=itot)
    floors = np.array([power_floor(q, t, scenario, model).floor
                       for q in range(Q)])
    if gamma_low is None:
        pm = PMatrixResult(is_P=False, spectral_radius=float("nan"))
        applicable = False
        c3 = False
    else:
        pm = p_matrix_test(gamma_low)
        applicable = True
        c3, _, _ = check_coupling_dominance(scenario, model, t, c, itot=itot)
    binding = {}
    if not np.all(c1_pass):
        binding["br_uniqueness"] = int(np.argmax(c1_lhs))
    if not bool(np.all(c2_pass)):
        binding["eq_uniqueness"] = int(np.argmax(c2_lhs))
    return ConditionReport(
        lambda_max=lam_cap, t=float(t), c=float(c), gamma1=g1,
        br_uniqueness_lhs=c1_lhs, br_uniqueness_pass=c1_pass, gamma2=g2,
        eq_uniqueness_lhs=c2_lhs, eq_uniqueness_pass=bool(np.all(c2_pass)),
        rho_low=rho, gamma_low=gamma_low, applicable=applicable,
        p_matrix=pm.is_P,
        contraction_c=pm.contraction if pm.contraction is not None else float("nan"),
        perron_weights=pm.perron_weights, dominance_pass=bool(c3),
        power_floors=floors, binding=binding)


def block_norm(delta, rho, f, c, Q, weights):
    """Weighted block-maximum norm of a (Q, N+2) strategy difference."""
    D2 = _d_matrices(rho, f, c, Q)
    out = 0.0
    for q in range(Q):
        e1 = abs(delta[q, 0])
        e2 = float(np.linalg.norm(delta[q, 1:]))
        val = math.sqrt(D2[q, 0] * e1 * e1 + D2[q, 1] * e2 * e2)
        out = max(out, val / weights[q])
    return out


def empirical_contraction(scenario, model, price, samples=50, rng=None,
                          cfg=None, report=None, t=None):
    """Observed best-response contraction ratio in the certified block norm.

    Draws random feasible profile pairs, applies the full best-response map
    at the fixed price to both, and reports the largest ratio of image
    distance to argument distance.  Diagnostic: certification always uses the
    analytic bound.
    """
    from .solver import BrConfig, best_response
    rng = rng or np.random.default_rng(0)
    if report is None:
        report = condition_report(scenario, model, t=t)
    if not report.applicable:
        raise ValueError("analytic contraction chain not applicable here")
    weights = report.perron_weights
    if weights is None:
        weights = np.ones(scenario.Q)
    cfg = cfg or BrConfig()
    lam_cap = report.lambda_max
    rho = report.rho_low

    def br_map(prof):
        rows = []
        for q in range(scenario.Q):
            s, _, _ = best_response(q, prof, price, scenario, model, cfg,
                                    lam_cap=lam_cap)
            rows.append(s.as_vector())
        return np.stack(rows)

    worst = 0.0
    for _ in range(samples):
        x = random_profile(scenario, model, rng)
        y = random_profile(scenario, model, rng)
        dx = x.as_matrix() - y.as_matrix()
        den = block_norm(dx, rho, model.f, scenario.c, scenario.Q, weights)
        if den <= 1e-12:
            continue
        dB = br_map(x) - br_map(y)
        num = block_norm(dB, rho, model.f, scenario.c, scenario.Q, weights)
        worst = max(worst, num / den)
    return worst
