import pytest

from cogneq.network import generate_scenario
from cogneq.sensing import SensingModel


# Instance recipes
# ----------------
# "conditioned": weak cross-coupling with flat direct links, passing the
# analytic best-response-uniqueness and coupling-dominance conditions
# (with dist_ratio >= 30 also the equilibrium-uniqueness condition).
# "binding": strong PU coupling so the interference constraints actually
# bind; the analytic certificates generally fail there, the universal
# multiplier bound still applies.

CONDITIONED = dict(Q=3, N=8, L=5, dist_ratio=10.0, pathloss_exp=3.0,
                   pu_gain=1e-3, normalize_direct=True, los_factor=5.0,
                   Imax_local=0.5, tau_min=0.25, tau_max=4.0, c=1.0)

BINDING = dict(Q=3, N=8, L=5, dist_ratio=10.0, pathloss_exp=3.0,
               pu_gain=1.0, pu_dist_ratio=2.0, normalize_direct=True,
               los_factor=5.0, Imax_local=0.02, tau_min=0.25, tau_max=4.0,
               c=1.0)


def make_scenario(seed, recipe=CONDITIONED, **overrides):
    kw = dict(recipe)
    kw.update(overrides)
    return generate_scenario(seed, **kw)


def make_model(scenario, snr_det=1.0, f=1.0, T=10.0):
    return SensingModel.from_snr(scenario.Q, scenario.N, snr_det=snr_det,
                                 f=f, T=T)


@pytest.fixture(scope="session")
def conditioned():
    scn = make_scenario(1)
    return scn, make_model(scn)


@pytest.fixture(scope="session")
def binding():
    scn = make_scenario(3, BINDING)
    return scn, make_model(scn)


@pytest.fixture(scope="session")
def small_pair():
    """Q=2, N=4 conditioned instance for contraction experiments."""
    scn = make_scenario(5, CONDITIONED, Q=2, N=4)
    return scn, make_model(scn)


def random_interior_strategy(rng, scenario, model, q):
    """Strategy strictly inside player q's convex set with positive powers."""
    from cogneq.constraints import feasible_set
    ys = feasible_set(q, scenario, model)
    t = rng.uniform(ys.tmin_hat + 0.05, ys.tmax_hat - 0.05)
    lo = ys.pfa_floor(t)
    pf = rng.uniform(lo + 0.05 * (ys.beta - lo), ys.beta - 0.02 * (ys.beta - lo))
    p = rng.uniform(0.2, 0.8) * ys.pmax
    s = p.sum()
    if s > 0.95 * ys.ptot:
        p *= 0.95 * ys.ptot / s
    from cogneq.network import Strategy
    return Strategy(tau_hat=float(t), p=p, pfa=float(pf))


def random_interior_profile(rng, scenario, model):
    from cogneq.network import Profile
    return Profile(x=[random_interior_strategy(rng, scenario, model, q)
                      for q in range(scenario.Q)])
