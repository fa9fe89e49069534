"""Lagrangian calculus for one player: values, gradients, Hessians; the
stacked optimality map; and the projected natural-map residual used for
error-bound termination."""

from dataclasses import dataclass

import numpy as np

from ._kernels import K
from .constraints import interference_global, interference_local
from .sensing import pmiss_hat_all
from .solver import player_data


@dataclass
class LagrangianEval:
    value: float
    grad: np.ndarray      # (N+2,), ordering (tau_hat, p_1..p_N, pfa)
    hess: np.ndarray      # (N+2, N+2)


def _interference_hessian(x, pld):
    """Hessian of the local interference sum; bordered, zero power block."""
    n = pld.pmax.size
    t, p, pf = float(x[0]), np.asarray(x[1:1 + n]), float(x[-1])
    pm, d_t, d_p, d_tt, d_tp, d_pp = K.pmiss_terms(
        t, pf, pld.sig0, pld.sig1, pld.dmu, order=2)
    wp = pld.w * p
    H = np.zeros((n + 2, n + 2))
    H[0, 0] = d_tt @ wp
    H[0, 1:1 + n] = d_t * pld.w
    H[1:1 + n, 0] = H[0, 1:1 + n]
    H[0, -1] = d_tp @ wp
    H[-1, 0] = H[0, -1]
    H[1:1 + n, -1] = d_p * pld.w
    H[-1, 1:1 + n] = H[1:1 + n, -1]
    H[-1, -1] = d_pp @ wp
    return H


def _payoff_hessian(x, pld):
    """Hessian of minus the player objective (throughput + equi penalty)."""
    n = pld.pmax.size
    t, p, pf = float(x[0]), np.asarray(x[1:1 + n]), float(x[-1])
    u = 1.0 - t * t / pld.fT
    dk = pld.den0 + p
    S = float(np.log1p(p / pld.den0).sum())
    H = np.zeros((n + 2, n + 2))
    H[0, 0] = (2.0 / pld.fT) * (1.0 + t * t / pld.fT) / (u * u) \
        + pld.c_pen * (pld.one_minus_invQ * pld.inv_sqrt_f) ** 2
    v = 1.0 / dk
    H[1:1 + n, 1:1 + n] = np.diag(v * v / S) + np.outer(v, v) / (S * S)
    H[-1, -1] = 1.0 / (1.0 - pf) ** 2
    return H


def lagrangian(q, profile, lambda_q, price, scenario, model):
    """Value, gradient and Hessian of player q's Lagrangian at the profile."""
    pld = player_data(q, profile, scenario, model)
    x = profile.x[q].as_vector()
    lp = lambda_q + price
    val, grad = K.eval_obj_grad(x, pld, lp)
    # the kernel folds price * I_q; add the rival part of the global violation
    iq = interference_local(q, profile.x[q], scenario, model)
    i_all = interference_global(profile, scenario, model)
    value = val + price * (i_all - iq)
    hess = _payoff_hessian(x, pld) + lp * _interference_hessian(x, pld)
    return LagrangianEval(value=float(value), grad=grad, hess=hess)


def vi_map(q, profile, lambda_q, price, scenario, model):
    """Stacked optimality map (grad of the Lagrangian; minus local violation)."""
    ev = lagrangian(q, profile, lambda_q, price, scenario, model)
    iq = interference_local(q, profile.x[q], scenario, model)
    return np.concatenate([ev.grad, [-iq]])


@dataclass
class ResidualParts:
    per_player: np.ndarray
    price_part: float

    @property
    def total(self):
        return float(self.per_player.sum() + self.price_part)


def natural_map_residual(profile, centers, prox_gain, lam_max, scenario, model):
    """Squared projected-optimality residual of the regularized system.

    centers is the tuple (lambda_centers, price_center) of the proximal
    regularization; zero total residual certifies a fixed point of the
    regularized equilibrium conditions.  Multiplier and price targets are
    clamped to [0, lam_max].
    """
    lam0, price0 = centers
    lam0 = np.asarray(lam0, dtype=float)
    Q = scenario.Q
    per = np.zeros(Q)
    i_all = -scenario.Imax_global
    for q in range(Q):
        pld = player_data(q, profile, scenario, model)
        x = profile.x[q].as_vector()
        lp = profile.lam[q] + profile.price
        val, grad = K.eval_obj_grad(x, pld, lp)
        if grad is None:
            raise ValueError(
                f"player {q} strategy outside the objective domain "
                "(zero rate sum); the residual is undefined there")
        xhat = K.project_player(x - grad, pld)
        iq = interference_local(q, profile.x[q], scenario, model)
        i_all += iq + scenario.Imax_local[q]
        lam_target = min(max(lam0[q] + iq / prox_gain, 0.0), lam_max)
        per[q] = float(np.sum((x - xhat) ** 2)) + (profile.lam[q] - lam_target) ** 2
    price_target = min(max(price0 + i_all / prox_gain, 0.0), lam_max)
    price_part = (profile.price - price_target) ** 2
    return ResidualParts(per_player=per, price_part=float(price_part))


def interference_local_from_vector(x, q, scenario, model):
    """Local violation evaluated on a flat (N+2)-vector."""
    n = scenario.N
    pm = pmiss_hat_all(float(x[-1]), float(x[0]), model, q)
    return float(pm @ (scenario.w[q] * x[1:1 + n])) - scenario.Imax_local[q]
