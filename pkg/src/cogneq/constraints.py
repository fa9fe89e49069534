"""Feasible sets, interference violation functions, feasibility pre-checks,
and the probabilistic interference-weight variants."""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .sensing import pmiss_hat_all, q_inverse
from ._kernels import K


@dataclass
class FeasibleSetY:
    """Convex feasible set of one player in (tau_hat, p, pfa) coordinates.

    The missed-detection caps become curve constraints pfa >= Q(cc_k + dd_k *
    tau_hat); the remaining constraints are the pfa cap, the tau_hat box and
    the capped simplex on powers.
    """

    tmin_hat: float
    tmax_hat: float
    beta: float
    sig0: np.ndarray
    sig1: np.ndarray
    dmu: np.ndarray
    alpha_hat: np.ndarray
    pmax: np.ndarray
    ptot: float

    def __post_init__(self):
        for name in ("sig0", "sig1", "dmu", "alpha_hat", "pmax"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.ccurve = self.sig1 * self.alpha_hat / self.sig0
        self.dcurve = self.dmu / self.sig0

    def pfa_floor(self, tau_hat):
        """Lower envelope of admissible pfa at the given tau_hat."""
        return float(np.max(K.qfunc(self.ccurve + self.dcurve * tau_hat)))

    def halfspace_slack(self, tau_hat, pfa):
        """Slack of each missed-detection halfspace (>= 0 means satisfied)."""
        v = q_inverse(float(np.clip(pfa, 1e-15, 1 - 1e-15)))
        lhs = (self.sig0 / self.sig1) * v - tau_hat * self.dmu / self.sig1
        return self.alpha_hat - lhs


def feasible_set(q, scenario, model):
    """Build player q's convex feasible set from the scenario and detector."""
    return FeasibleSetY(
        tmin_hat=math.sqrt(scenario.tau_min[q] * model.f[q]),
        tmax_hat=math.sqrt(scenario.tau_max[q] * model.f[q]),
        beta=float(scenario.beta[q]),
        sig0=model.sigma0[q],
        sig1=model.sigma1[q],
        dmu=model.dmu[q],
        alpha_hat=q_inverse(1.0 - scenario.alpha[q]),
        pmax=scenario.pmax[q],
        ptot=float(scenario.Pbudget[q]),
    )


def interference_local(q, strategy, scenario, model):
    """Local interference violation: sum_k pmiss * w * p - Imax_q (<=0 feasible)."""
    pm = pmiss_hat_all(strategy.pfa, strategy.tau_hat, model, q)
    return float(pm @ (scenario.w[q] * strategy.p)) - scenario.Imax_local[q]


def interference_global(profile, scenario, model):
    """Aggregate interference violation across all players (<= 0 feasible)."""
    total = 0.0
    for q in range(scenario.Q):
        total += interference_local(q, profile.x[q], scenario, model) \
            + scenario.Imax_local[q]
    return total - scenario.Imax_global


def _feas_rhs(scenario, model):
    """Per-(q, k) lower bound on sqrt(f tau) required for a nonempty set."""
    beta = scenario.beta[:, None] * np.ones_like(scenario.alpha)
    rhs = (q_inverse(beta) + np.abs(q_inverse(scenario.alpha))
           * (model.sigma1 / model.sigma0)) / model.snr_det
    return rhs


@dataclass
class FeasibilityReport:
    ok: bool
    reason: str
    binding: tuple
    min_common_tau: float


def feasibility_common(scenario, model):
    """Existence of a common sensing time feasible for every player.

    Checks overlap of the per-player tau intervals and the per-(q, k)
    time-bandwidth requirement; reports the binding pair and the minimal
    feasible common tau.
    """
    rhs = _feas_rhs(scenario, model)
    tau_need = np.maximum(rhs, 0.0) ** 2 / model.f[:, None]
    q_bind, k_bind = np.unravel_index(np.argmax(tau_need), tau_need.shape)
    lo = float(np.max(scenario.tau_min))
    hi = float(np.min(scenario.tau_max))
    min_tau = max(lo, float(tau_need.max()))
    if lo > hi:
        return FeasibilityReport(False, "sensing-time intervals do not overlap",
                                 (int(np.argmax(scenario.tau_min)), -1), min_tau)
    if min_tau > hi:
        return FeasibilityReport(False, "time-bandwidth requirement exceeds tau_max",
                                 (int(q_bind), int(k_bind)), min_tau)
    return FeasibilityReport(True, "", (int(q_bind), int(k_bind)), min_tau)


def feasibility_individual(scenario, model):
    """Per-player nonemptiness (no common sensing time required)."""
    rhs = _feas_rhs(scenario, model)
    have = np.sqrt(model.f * scenario.tau_max)[:, None]
    slack = have - rhs
    q_bind, k_bind = np.unravel_index(np.argmin(slack), slack.shape)
    ok = bool(np.all(slack >= 0.0))
    reason = "" if ok else "time-bandwidth requirement exceeds tau_max"
    min_tau = float(np.max(np.maximum(rhs, 0.0) ** 2 / model.f[:, None], initial=0.0))
    return FeasibilityReport(ok, reason, (int(q_bind), int(k_bind)), min_tau)


def probabilistic_weights(mode, scenario, *, sigma_g=1.0, varsigma=2.0,
                          d_pu=None, d0=1.0, density=1.0, r0=None, p_qos=0.95):
    """Interference weights under reduced channel knowledge.

    'instantaneous-gains' keeps w = |G|^2; 'expected-pathloss' replaces each
    weight by sigma_g / (1 + (d/d0)^varsigma); 'rayleigh-worst-case' sets
    w = 1 and inflates the local caps to
    (Imax/sigma_g) (1 + |ln p_qos| / (pi * density * r0^2)).
    Returns (w, Imax_local_adjusted).
    """
    Q, N = scenario.Q, scenario.N
    if not 2.0 <= varsigma <= 6.0:
        warnings.warn("path-loss exponent outside the usual [2, 6] range")
    if mode == "instantaneous-gains":
        return scenario.G.copy(), scenario.Imax_local.copy()
    if mode == "expected-pathloss":
        if d_pu is None:
            d_pu = np.ones(Q)
        d_pu = np.broadcast_to(np.asarray(d_pu, dtype=float), (Q,))
        w = sigma_g / (1.0 + (d_pu / d0) ** varsigma)
        return np.repeat(w[:, None], N, axis=1), scenario.Imax_local.copy()
    if mode == "rayleigh-worst-case":
        r_ref = d0 if r0 is None else r0  # Fraunhofer distance alias
        infl = 1.0 + abs(math.log(p_qos)) / (math.pi * density * r_ref ** 2)
        return np.ones((Q, N)), scenario.Imax_local / sigma_g * infl
    raise ValueError(f"unknown weight mode: {mode}")


@dataclass
class Membership:
    in_Y: bool
    in_X: bool
    violations: list
    slacks: dict


def membership(q, strategy, scenario, model, tol=1e-8):
    """Itemized feasibility check of one strategy against Y_q and X_q."""
    ys = feasible_set(q, scenario, model)
    violations = []
    slacks = {}

    s_tau_lo = strategy.tau_hat - ys.tmin_hat
    s_tau_hi = ys.tmax_hat - strategy.tau_hat
    slacks["tau_hat_min"] = s_tau_lo
    slacks["tau_hat_max"] = s_tau_hi
    if s_tau_lo < -tol:
        violations.append("tau_hat_min")
    if s_tau_hi < -tol:
        violations.append("tau_hat_max")

    s_beta = ys.beta - strategy.pfa
    slacks["pfa_beta"] = s_beta
    if s_beta < -tol:
        violations.append("pfa_beta")

    hs = ys.halfspace_slack(strategy.tau_hat, strategy.pfa)
    slacks["pmiss_halfspaces"] = hs
    for k in np.where(hs < -tol)[0]:
        violations.append(f"pmiss_halfspace[{k}]")

    p = np.asarray(strategy.p, dtype=float)
    slacks["p_nonneg"] = float(p.min(initial=0.0))
    if np.any(p < -tol):
        violations.append("p_nonneg")
    s_mask = ys.pmax - p
    slacks["p_mask"] = float(s_mask.min())
    for k in np.where(s_mask < -tol)[0]:
        violations.append(f"p_mask[{k}]")
    s_budget = ys.ptot - p.sum()
    slacks["p_budget"] = s_budget
    if s_budget < -tol:
        violations.append("p_budget")

    in_Y = not violations
    iq = interference_local(q, strategy, scenario, model)
    slacks["interference_local"] = -iq
    in_X = in_Y and iq <= tol
    if iq > tol:
        violations.append("interference_local")
    return Membership(in_Y=in_Y, in_X=in_X, violations=violations, slacks=slacks)
