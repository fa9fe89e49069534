"""Equilibrium-seeking dynamics: synchronous/sequential/asynchronous
best-response sweeps at a fixed price, the proximal outer loop with
multiplier/price players, the single-loop variant, and equilibrium
certification."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import consensus as cons
from .analysis import block_norm, lambda_max
from .constraints import interference_global, interference_local
from .kkt import natural_map_residual
from .network import Profile, Strategy, payoff_theta
from .solver import (BrConfig, best_response, cold_start, minimize_lagrangian,
                     player_data, price_update_regularized)


@dataclass
class Schedule:
    """Update discipline of the players across rounds.

    Asynchronous mode draws per-player update periods and bounded-staleness
    lags deterministically from the seed; every player updates at least once
    in any window of ``window`` rounds.
    """

    mode: str = "jacobi"                 # jacobi | gauss-seidel | asynchronous
    staleness: int = 0
    seed: int = 0
    window: int = 4

    def __post_init__(self):
        if self.mode not in ("jacobi", "gauss-seidel", "asynchronous"):
            raise ValueError(f"unknown schedule mode: {self.mode}")
        if self.mode == "asynchronous" and self.window < 1:
            raise ValueError("window must be >= 1")

    def plan(self, Q, rounds):
        """Activation table (rounds, Q) and staleness draws (rounds, Q)."""
        if self.mode != "asynchronous":
            return np.ones((rounds, Q), dtype=bool), np.zeros((rounds, Q), int)
        rng = np.random.default_rng(self.seed)
        periods = rng.integers(1, self.window + 1, Q)
        phases = rng.integers(0, self.window, Q)
        act = np.zeros((rounds, Q), dtype=bool)
        for q in range(Q):
            act[phases[q] % periods[q]::periods[q], q] = True
        act[0] = True
        lag = rng.integers(0, self.staleness + 1, (rounds, Q))
        return act, lag


@dataclass
class TraceRow:
    iter: int
    player: int
    tau: float
    tau_hat: float
    pfa: float
    throughput: float
    i_local: float
    i_global: float
    price: float
    lam: float
    residual: float
    consensus_msgs: int


class RunTrace:
    """Append-only per-iteration record, serializable to CSV."""

    HEADER = ("iter,player,tau,tau_hat,pfa,throughput,I_local,I_global,"
              "price,lambda,residual,consensus_msgs")

    def __init__(self):
        self.rows = []

    def append(self, row):
        self.rows.append(row)

    def log_profile(self, n, profile, scenario, model, residual, msgs):
        i_glob = interference_global(profile, scenario, model)
        for q in range(scenario.Q):
            s = profile.x[q]
            self.append(TraceRow(
                iter=n, player=q, tau=s.tau_hat ** 2 / model.f[q],
                tau_hat=s.tau_hat, pfa=s.pfa,
                throughput=payoff_theta(q, profile, scenario, model),
                i_local=interference_local(q, s, scenario, model),
                i_global=i_glob, price=profile.price, lam=float(profile.lam[q]),
                residual=residual, consensus_msgs=msgs))

    def to_csv(self):
        def fmt(v):
            if isinstance(v, float):
                return f"{v:.12g}"
            return str(v)
        lines = [self.HEADER]
        for r in self.rows:
            lines.append(",".join(fmt(getattr(r, f)) for f in
                                  TraceRow.__dataclass_fields__))
        return "\n".join(lines) + "\n"

    def column(self, name, player=None):
        vals = [getattr(r, name) for r in self.rows
                if player is None or r.player == player]
        return np.array(vals)


@dataclass
class RunInfo:
    converged: bool
    iterations: int
    message: str = ""
    consensus_msgs: int = 0
    report: object = None


def _initial_profile(scenario, model, x0=None):
    if x0 is not None:
        return x0.copy()
    strategies = []
    base = Profile(x=[Strategy(0.0, np.zeros(scenario.N), 0.25)
                      for _ in range(scenario.Q)])
    for q in range(scenario.Q):
        pld = player_data(q, base, scenario, model, avg_rest=0.0)
        strategies.append(Strategy.from_vector(cold_start(pld)))
    return Profile(x=strategies)


def _pin_tau(scenario, model, tau):
    """Freeze the sensing time: collapse the tau box to a single value."""
    eps = 1e-12 + abs(tau) * 1e-12
    return replace(scenario, tau_min=np.full(scenario.Q, tau),
                   tau_max=np.full(scenario.Q, tau + eps))


class _Averager:
    """Network averages via finite-time consensus or exact (centralized)."""

    def __init__(self, scenario, centralized):
        self.centralized = centralized
        self.fallback = False
        self.params = None
        if not centralized:
            try:
                self.params = cons.compute_finite_time_params(scenario.graph)
            except cons.ExtractionInfeasible:
                # documented fallback: exact averaging, flagged in the info
                self.fallback = True
                self.centralized = True
        self.msgs = 0

    def mean(self, values):
        if self.centralized:
            return float(np.mean(values))
        res = cons.finite_time_average(values, self.params)
        self.msgs += res.messages_total
        return res.value


def _step_norm(new, old, report, model, scenario):
    delta = new - old
    if report is not None and report.applicable and \
            report.perron_weights is not None and np.all(report.rho_low > 0):
        return block_norm(delta, report.rho_low, model.f, scenario.c,
                          scenario.Q, report.perron_weights)
    return float(np.max(np.abs(delta)))


def run_algorithm1(scenario, model, price=0.0, schedule=None, cfg=None, *,
                   tol=1e-6, max_iters=300, centralized=False, fixed_tau=None,
                   x0=None, trace=None, report=None, lam_cap=None):
    """Best-response sweeps for the fixed-price game.

    Each round broadcasts the sensing-time average (finite-time consensus
    unless centralized) and lets the scheduled players best-respond.  With
    ``fixed_tau`` the sensing times are frozen to a common value and only
    powers and false-alarm rates are optimized.
    """
    if fixed_tau is not None:
        scenario = _pin_tau(scenario, model, fixed_tau)
    schedule = schedule or Schedule()
    cfg = cfg or BrConfig()
    trace = trace if trace is not None else RunTrace()
    if lam_cap is None:
        lam_cap = lambda_max(scenario)
    profile = _initial_profile(scenario, model, x0)
    profile.price = price
    avg = _Averager(scenario, centralized)
    act, lag = schedule.plan(scenario.Q, max_iters)
    history = [profile.copy()]
    sqrt_f = np.sqrt(model.f)

    converged = False
    n_done = 0
    recent_steps = []
    for n in range(max_iters):
        X_old = profile.as_matrix()
        tau_bar = avg.mean(profile.tau_hat_vector() / sqrt_f)
        new_strats = list(profile.x)
        lam_new = profile.lam.copy()
        worst_resid = 0.0
        base = profile.copy() if schedule.mode != "gauss-seidel" else profile
        for q in range(scenario.Q):
            if not act[n, q]:
                continue
            if schedule.mode == "asynchronous":
                view = history[max(0, len(history) - 1 - lag[n, q])].copy()
                view.x[q] = profile.x[q]
            elif schedule.mode == "gauss-seidel":
                view = Profile(x=list(new_strats), lam=lam_new, price=price)
            else:
                view = base
            avg_rest = tau_bar - profile.x[q].tau_hat \
                / (math.sqrt(model.f[q]) * scenario.Q)
            s, lam_q, diag = best_response(q, view, price, scenario, model,
                                           cfg, lam_cap=lam_cap,
                                           avg_rest=avg_rest,
                                           lam_warm=float(profile.lam[q]))
            new_strats[q] = s
            lam_new[q] = lam_q
            worst_resid = max(worst_resid, diag.resid)
        profile = Profile(x=new_strats, lam=lam_new, price=price)
        history.append(profile.copy())
        if len(history) > 16:
            history.pop(0)
        step = _step_norm(profile.as_matrix(), X_old, report, model, scenario)
        recent_steps.append(step)
        trace.log_profile(n, profile, scenario, model, step, avg.msgs)
        n_done = n + 1
        window = schedule.window if schedule.mode == "asynchronous" else 1
        if n + 1 >= window and max(recent_steps[-window:]) <= tol:
            recent = act[max(0, n + 1 - window):n + 1]
            if schedule.mode != "asynchronous" or recent.any(axis=0).all():
                converged = True
                break
    info = RunInfo(converged=converged, iterations=n_done,
                   consensus_msgs=avg.msgs, report=report,
                   message="" if converged else "iteration budget exhausted")
    return profile, trace, info


def _vector_average(avg, tau_over, i_contrib):
    """Average the sensing times and the interference contributions."""
    return avg.mean(tau_over), avg.mean(i_contrib)


def _lagrangian_sweep(profile, lam_vec, price, tau_bar, scenario, model, cfg):
    """One simultaneous pass of the convexified player subproblems."""
    new = []
    worst = 0.0
    for q in range(scenario.Q):
        avg_rest = tau_bar - profile.x[q].tau_hat \
            / (math.sqrt(model.f[q]) * scenario.Q)
        pld = player_data(q, profile, scenario, model, avg_rest=avg_rest)
        x, _, resid, _ = minimize_lagrangian(
            profile.x[q].as_vector(), pld, lam_vec[q] + price, cfg)
        new.append(Strategy.from_vector(x))
        worst = max(worst, resid)
    return new, worst


def run_algorithm3(scenario, model, t=None, prox_gain=1.0, relaxation=0.5,
                   inner_cfg=None, *, tol=1e-6, max_outer=200,
                   max_inner=60, inner_tol0=1e-2, centralized=False,
                   x0=None, lam0=None, price0=None, trace=None):
    """Proximal outer loop: solve the regularized game to increasing
    accuracy, then relax the multiplier/price centers toward its solution."""
    lam_cap = lambda_max(scenario)
    if t is None:
        t = 1.05 * lam_cap
    if t <= lam_cap:
        raise ValueError(f"price truncation t={t} must exceed the multiplier "
                         f"bound {lam_cap}")
    if not 0.0 < relaxation < 1.0:
        raise ValueError("relaxation must lie in (0, 1)")
    cfg = inner_cfg or BrConfig()
    trace = trace if trace is not None else RunTrace()
    avg = _Averager(scenario, centralized)
    sqrt_f = np.sqrt(model.f)

    profile = _initial_profile(scenario, model, x0)
    centers_lam = np.full(scenario.Q, 0.05 * lam_cap if lam0 is None else lam0,
                          dtype=float)
    center_price = 0.05 * lam_cap if price0 is None else float(price0)
    profile.lam = centers_lam.copy()
    profile.price = center_price

    n_rounds = 0
    converged = False
    for outer in range(1, max_outer + 1):
        eps_n = inner_tol0 / outer ** 2
        for _ in range(max_inner):
            tau_bar = avg.mean(profile.tau_hat_vector() / sqrt_f)
            iq = np.array([interference_local(q, profile.x[q], scenario, model)
                           for q in range(scenario.Q)])
            i_glob = scenario.Q * avg.mean(iq + scenario.Imax_local) \
                - scenario.Imax_global
            new_strats, _ = _lagrangian_sweep(profile, profile.lam,
                                              profile.price, tau_bar,
                                              scenario, model, cfg)
            lam_new = np.clip(centers_lam + iq / prox_gain, 0.0, lam_cap)
            price_new = price_update_regularized(center_price, i_glob,
                                                 prox_gain, lam_cap)
            profile = Profile(x=new_strats, lam=lam_new, price=price_new)
            res = natural_map_residual(profile, (centers_lam, center_price),
                                       prox_gain, lam_cap, scenario, model)
            n_rounds += 1
            trace.log_profile(n_rounds, profile, scenario, model, res.total,
                              avg.msgs)
            if res.total <= eps_n:
                break
        # stationarity of the un-regularized system: evaluate the natural map
        # with the centers standing in for the multiplier/price variables
        probe = Profile(x=list(profile.x), lam=centers_lam.copy(),
                        price=center_price)
        outer_res = natural_map_residual(probe, (centers_lam, center_price),
                                         prox_gain, lam_cap, scenario, model)
        centers_lam = (1.0 - relaxation) * centers_lam \
            + relaxation * profile.lam
        center_price = (1.0 - relaxation) * center_price \
            + relaxation * profile.price
        if outer_res.total <= tol:
            converged = True
            break
    info = RunInfo(converged=converged, iterations=n_rounds,
                   consensus_msgs=avg.msgs,
                   message="" if converged else "outer budget exhausted")
    return profile, trace, info


def run_algorithm4(scenario, model, t=None, prox_gain=1.0, relaxation=0.5,
                   schedule=None, *, cfg=None, tol=1e-6, max_iters=2000,
                   inner_tol0=1e-2, centralized=False, x0=None, lam0=None,
                   price0=None, trace=None):
    """Single-loop variant: every round updates strategies, multipliers and
    the price simultaneously; the proximal centers advance whenever the
    current point solves the regularized game to the stage tolerance."""
    lam_cap = lambda_max(scenario)
    if t is None:
        t = 1.05 * lam_cap
    if t <= lam_cap:
        raise ValueError(f"price truncation t={t} must exceed the multiplier "
                         f"bound {lam_cap}")
    schedule = schedule or Schedule()
    cfg = cfg or BrConfig()
    trace = trace if trace is not None else RunTrace()
    avg = _Averager(scenario, centralized)
    sqrt_f = np.sqrt(model.f)

    profile = _initial_profile(scenario, model, x0)
    centers_lam = np.full(scenario.Q, 0.05 * lam_cap if lam0 is None else lam0,
                          dtype=float)
    center_price = 0.05 * lam_cap if price0 is None else float(price0)
    profile.lam = centers_lam.copy()
    profile.price = center_price

    act, lag = schedule.plan(scenario.Q, max_iters)
    history = [profile.copy()]
    stage = 1
    converged = False
    n_done = 0
    for n in range(max_iters):
        eps_n = inner_tol0 / stage ** 2
        tau_bar = avg.mean(profile.tau_hat_vector() / sqrt_f)
        iq = np.array([interference_local(q, profile.x[q], scenario, model)
                       for q in range(scenario.Q)])
        i_glob = scenario.Q * avg.mean(iq + scenario.Imax_local) \
            - scenario.Imax_global

        new_strats = list(profile.x)
        for q in range(scenario.Q):
            if not act[n, q]:
                continue
            if schedule.mode == "asynchronous":
                view = history[max(0, len(history) - 1 - lag[n, q])].copy()
                view.x[q] = profile.x[q]
            elif schedule.mode == "gauss-seidel":
                view = Profile(x=list(new_strats), lam=profile.lam,
                               price=profile.price)
            else:
                view = profile
            avg_rest = tau_bar - profile.x[q].tau_hat \
                / (math.sqrt(model.f[q]) * scenario.Q)
            pld = player_data(q, view, scenario, model, avg_rest=avg_rest)
            x, _, _, _ = minimize_lagrangian(
                profile.x[q].as_vector(), pld,
                profile.lam[q] + profile.price, cfg)
            new_strats[q] = Strategy.from_vector(x)
        lam_new = np.clip(centers_lam + iq / prox_gain, 0.0, lam_cap)
        price_new = price_update_regularized(center_price, i_glob, prox_gain,
                                             lam_cap)
        profile = Profile(x=new_strats, lam=lam_new, price=price_new)
        history.append(profile.copy())
        if len(history) > 16:
            history.pop(0)

        res = natural_map_residual(profile, (centers_lam, center_price),
                                   prox_gain, lam_cap, scenario, model)
        trace.log_profile(n, profile, scenario, model, res.total, avg.msgs)
        n_done = n + 1
        if res.total <= eps_n:
            probe = Profile(x=list(profile.x), lam=centers_lam.copy(),
                            price=center_price)
            outer_res = natural_map_residual(
                probe, (centers_lam, center_price), prox_gain, lam_cap,
                scenario, model)
            centers_lam = (1.0 - relaxation) * centers_lam \
                + relaxation * profile.lam
            center_price = (1.0 - relaxation) * center_price \
                + relaxation * profile.price
            stage += 1
            if outer_res.total <= tol:
                converged = True
                break
    info = RunInfo(converged=converged, iterations=n_done,
                   consensus_msgs=avg.msgs,
                   message="" if converged else "iteration budget exhausted")
    return profile, trace, info


@dataclass
class Certificate:
    passed: bool
    improvements: np.ndarray
    i_global: float
    complementarity: float
    price_ok: bool
    failing_players: list = field(default_factory=list)
    reasons: list = field(default_factory=list)

    def to_dict(self):
        return {
            "passed": bool(self.passed),
            "improvements": self.improvements.tolist(),
            "i_global": self.i_global,
            "complementarity": self.complementarity,
            "price_ok": bool(self.price_ok),
            "failing_players": self.failing_players,
            "reasons": self.reasons,
        }


def certify_ne(profile, price, scenario, model, tol=1e-4, multistart=5,
               seed=0, lam_cap=None):
    """Re-solve every player's best response with multistart and verify that
    nobody can improve beyond tol; check feasibility of every strategy and
    the price clearing conditions."""
    from .constraints import membership
    from .solver import _objective_at
    cfg = BrConfig(multistart=multistart, rng=np.random.default_rng(seed))
    if lam_cap is None:
        lam_cap = lambda_max(scenario)
    Q = scenario.Q
    improvements = np.zeros(Q)
    failing = []
    reasons = []
    for q in range(Q):
        mem = membership(q, profile.x[q], scenario, model, tol=max(tol, 1e-8))
        if not mem.in_X:
            failing.append(q)
            reasons.append(f"player {q} strategy infeasible: {mem.violations}")
            continue
        pld = player_data(q, profile, scenario, model)
        cur = _objective_at(profile.x[q].as_vector(), pld, price)
        _, _, diag = best_response(q, profile, price, scenario, model, cfg,
                                   lam_cap=lam_cap)
        improvements[q] = diag.objective - cur
        if improvements[q] > tol:
            failing.append(q)
            reasons.append(f"player {q} can improve by {improvements[q]:.3e}")
    i_glob = interference_global(profile, scenario, model)
    comp = abs(price * i_glob)
    price_ok = price >= 0.0 and i_glob <= tol and comp <= tol
    if not price_ok:
        reasons.append(
            f"price clearing violated: price={price:.3e} I={i_glob:.3e}")
    return Certificate(passed=not failing and price_ok,
                       improvements=improvements, i_global=i_glob,
                       complementarity=comp, price_ok=price_ok,
                       failing_players=failing, reasons=reasons)


def iteration_budget(contraction, target_eps):
    """Rounds needed to shrink the relative error below target_eps under a
    contraction factor in (0, 1)."""
    if not 0.0 < contraction < 1.0:
        raise ValueError("contraction factor must lie in (0, 1)")
    if not 0.0 < target_eps <= 1.0:
        raise ValueError("target accuracy must lie in (0, 1]")
    if target_eps == 1.0:
        return 0
    return math.ceil(math.log(1.0 / target_eps) / math.log(1.0 / contraction))
