"""Scenario generation and payoff evaluation: frequency-selective channels,
per-carrier rates, opportunistic throughput, and the equi-sensing-penalized
player objective."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

NEG_INF = float("-inf")


@dataclass
class Scenario:
    """Immutable network description.

    H[q, r, k] are squared channel magnitudes from transmitter r to receiver
    q; G[q, k] squared cross-gains from secondary transmitter q to the primary
    receiver; noise the background PSD per (receiver, carrier).  w holds the
    interference weights actually used in the constraints (defaults to G).
    graph[q, r] = True marks r as an in-neighbor of q for consensus.
    """

    H: np.ndarray               # (Q, Q, N)
    G: np.ndarray               # (Q, N)
    noise: np.ndarray           # (Q, N)
    Pbudget: np.ndarray         # (Q,)
    pmax: np.ndarray            # (Q, N)
    Imax_local: np.ndarray      # (Q,)
    Imax_global: float
    alpha: np.ndarray           # (Q, N), in (0, 1/2]
    beta: np.ndarray            # (Q,), in (0, 1/2]
    tau_min: np.ndarray         # (Q,)
    tau_max: np.ndarray         # (Q,)
    c: float = 0.0
    w: np.ndarray = field(default=None)
    graph: np.ndarray = field(default=None)

    def __post_init__(self):
        arrays = ("H", "G", "noise", "Pbudget", "pmax", "Imax_local", "alpha",
                  "beta", "tau_min", "tau_max")
        for name in arrays:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.w is None:
            self.w = self.G.copy()
        else:
            self.w = np.asarray(self.w, dtype=float)
        Q = self.H.shape[0]
        if self.graph is None:
            self.graph = ~np.eye(Q, dtype=bool)
        else:
            self.graph = np.asarray(self.graph, dtype=bool)
        self.Imax_global = float(self.Imax_global)
        self.c = float(self.c)
        self._validate()
        for name in arrays + ("w",):
            getattr(self, name).setflags(write=False)

    def _validate(self):
        Q, _, N = self.H.shape
        if self.H.shape != (Q, Q, N):
            raise ValueError("H must have shape (Q, Q, N)")
        diag = self.H[np.arange(Q), np.arange(Q), :]
        if np.any(diag <= 0):
            raise ValueError("direct channel gains must be positive")
        if np.any(self.H < 0) or np.any(self.G < 0):
            raise ValueError("channel gains are squared magnitudes, must be >= 0")
        if np.any(self.noise <= 0):
            raise ValueError("noise PSD must be positive")
        if np.any(self.Pbudget <= 0) or np.any(self.pmax <= 0):
            raise ValueError("power budgets must be positive")
        if np.any(self.Imax_local <= 0) or self.Imax_global <= 0:
            raise ValueError("interference caps must be positive")
        if np.any(self.alpha <= 0) or np.any(self.alpha > 0.5):
            raise ValueError("alpha bounds must lie in (0, 1/2]")
        if np.any(self.beta <= 0) or np.any(self.beta > 0.5):
            raise ValueError("beta bounds must lie in (0, 1/2]")
        if np.any(self.tau_min <= 0) or np.any(self.tau_max <= self.tau_min):
            raise ValueError("sensing-time bounds need 0 < tau_min < tau_max")
        if self.c < 0:
            raise ValueError("equi-sensing gain must be >= 0")

    @property
    def Q(self):
        return self.H.shape[0]

    @property
    def N(self):
        return self.H.shape[2]

    def direct_gain(self, q):
        return self.H[q, q]

    def hhat(self, q):
        """Normalized cross gains |H_qr|^2 / |H_qq|^2, shape (Q, N)."""
        return self.H[q] / self.H[q, q]

    def sigma_hat2(self, q):
        """Noise PSD normalized by the direct gain."""
        return self.noise[q] / self.H[q, q]

    def with_weights(self, w, Imax_local=None):
        kw = {"w": np.asarray(w, dtype=float)}
        if Imax_local is not None:
            kw["Imax_local"] = np.asarray(Imax_local, dtype=float)
        return replace(self, **kw)


@dataclass
class Strategy:
    """One player's tuple: normalized sensing time, powers, false-alarm rate."""

    tau_hat: float
    p: np.ndarray
    pfa: float

    def as_vector(self):
        return np.concatenate(([self.tau_hat], np.asarray(self.p, dtype=float),
                               [self.pfa]))

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(tau_hat=float(x[0]), p=x[1:-1].copy(), pfa=float(x[-1]))


@dataclass
class Profile:
    """All players' strategies plus the multipliers and the price."""

    x: list                      # list[Strategy]
    lam: np.ndarray = field(default=None)
    price: float = 0.0

    def __post_init__(self):
        if self.lam is None:
            self.lam = np.zeros(len(self.x))
        else:
            self.lam = np.asarray(self.lam, dtype=float)

    def as_matrix(self):
        return np.stack([s.as_vector() for s in self.x])

    @classmethod
    def from_matrix(cls, X, lam=None, price=0.0):
        strategies = [Strategy.from_vector(row) for row in np.asarray(X, dtype=float)]
        return cls(x=strategies, lam=lam, price=price)

    def copy(self):
        return Profile(x=[Strategy(s.tau_hat, s.p.copy(), s.pfa) for s in self.x],
                       lam=self.lam.copy(), price=self.price)

    def tau_hat_vector(self):
        return np.array([s.tau_hat for s in self.x])

    def powers(self):
        return np.stack([s.p for s in self.x])

    def pfa_vector(self):
        return np.array([s.pfa for s in self.x])


def fir_channel_gains(rng, N, L):
    """Squared magnitude of the N-point response of a random length-L FIR
    filter with i.i.d. complex zero-mean taps of variance 1/L^2."""
    std = math.sqrt(0.5) / L
    taps = rng.normal(0.0, std, L) + 1j * rng.normal(0.0, std, L)
    return np.abs(np.fft.fft(taps, N)) ** 2


def generate_scenario(seed, Q, N, L=5, *, dist_ratio=3.0, pathloss_exp=3.0,
                      pu_gain=1e-2, pu_dist_ratio=None, noise=1.0,
                      Pbudget=None, pmax_factor=2.0, Imax_local=0.5,
                      Imax_global=None, alpha=0.5, beta=0.5, tau_min=0.25,
                      tau_max=4.0, c=0.0, snr_db=2.0, los_factor=0.0,
                      normalize_direct=False, graph=None):
    """Random multicarrier interference scenario, deterministic given seed.

    Channels are squared N-point frequency responses of length-L random FIR
    filters (taps of variance 1/L^2); cross links are attenuated by
    (d_qr/d_qq)^-pathloss_exp with d_qr/d_qq = dist_ratio.  los_factor adds a
    deterministic direct-path tap to the direct links, which keeps them away
    from deep fades.
    """
    rng = np.random.default_rng(seed)
    H = np.empty((Q, Q, N))
    for q in range(Q):
        for r in range(Q):
            gains = fir_channel_gains(rng, N, L)
            if q == r:
                if los_factor > 0.0:
                    std = math.sqrt(0.5) / L
                    taps = rng.normal(0.0, std, L) + 1j * rng.normal(0.0, std, L)
                    taps[0] += los_factor / L
                    gains = np.abs(np.fft.fft(taps, N)) ** 2
                H[q, r] = gains
            else:
                H[q, r] = gains / dist_ratio ** pathloss_exp
    if normalize_direct:
        # receiver-side gain normalization: unit direct links per carrier
        for q in range(Q):
            scale = H[q, q].copy()
            for r in range(Q):
                H[q, r] = H[q, r] / scale
    pu_ratio = dist_ratio if pu_dist_ratio is None else pu_dist_ratio
    G = np.empty((Q, N))
    for q in range(Q):
        G[q] = pu_gain * fir_channel_gains(rng, N, L) / pu_ratio ** pathloss_exp

    noise_arr = np.full((Q, N), float(noise))
    if Pbudget is None:
        Pbudget = 10.0 ** (snr_db / 10.0) * noise_arr.mean(axis=1)
    Pbudget = np.broadcast_to(np.asarray(Pbudget, dtype=float), (Q,)).copy()
    pmax = np.outer(Pbudget, np.ones(N)) * (pmax_factor / N)
    if Imax_global is None:
        Imax_global = float(np.sum(np.broadcast_to(Imax_local, (Q,))))
    return Scenario(
        H=H, G=G, noise=noise_arr, Pbudget=Pbudget, pmax=pmax,
        Imax_local=np.broadcast_to(np.asarray(Imax_local, dtype=float), (Q,)).copy(),
        Imax_global=Imax_global,
        alpha=np.full((Q, N), float(alpha)), beta=np.full(Q, float(beta)),
        tau_min=np.full(Q, float(tau_min)), tau_max=np.full(Q, float(tau_max)),
        c=c, graph=graph,
    )


def rate(q, k, profile, scenario):
    """Achievable rate of link q on carrier k under the given power profile."""
    p = profile.powers()
    hq = scenario.hhat(q)
    den = scenario.sigma_hat2(q)[k] + sum(
        hq[r, k] * p[r, k] for r in range(scenario.Q) if r != q)
    return math.log1p(p[q, k] / den)


def rates_all(q, P, scenario):
    """Per-carrier rates of player q; P is the (Q, N) power matrix."""
    hq = scenario.hhat(q)
    mui = np.einsum("rk,rk->k", hq, P) - hq[q] * P[q]
    den = scenario.sigma_hat2(q) + mui
    return np.log1p(P[q] / den)


def throughput(q, profile, scenario, model):
    """Log opportunistic throughput of player q.

    Returns -inf (an error sentinel, not a usable value) when the log argument
    is non-positive; solvers never evaluate there.
    """
    s = profile.x[q]
    frame = 1.0 - s.tau_hat ** 2 / (model.f[q] * model.T[q])
    total = frame * (1.0 - s.pfa) * rates_all(q, profile.powers(), scenario).sum()
    if total <= 0.0:
        return NEG_INF
    return math.log(total)


def equi_sensing_penalty(q, profile, scenario, model):
    tau_over = profile.tau_hat_vector() / np.sqrt(model.f)
    dev = tau_over[q] - tau_over.mean()
    return 0.5 * scenario.c * dev * dev


def payoff_theta(q, profile, scenario, model):
    """Player q's objective: throughput minus the equi-sensing penalty."""
    R = throughput(q, profile, scenario, model)
    if R == NEG_INF:
        return NEG_INF
    return R - equi_sensing_penalty(q, profile, scenario, model)
