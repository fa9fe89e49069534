"""Energy-detector statistics: Gaussian tail machinery, false-alarm /
detection / missed-detection probabilities, and the sqrt(time-bandwidth)
change of variables used everywhere downstream."""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import K, PFA_GUARD


def q_function(x):
    """Gaussian tail probability; strictly decreasing, range (0, 1)."""
    return K.qfunc(x)


def q_inverse(p):
    """Inverse Gaussian tail probability on (0, 1).

    Raises ValueError outside the open interval.
    """
    return K.qinv(p)


def _clamp_pfa(pfa):
    return np.clip(pfa, PFA_GUARD, 1.0 - PFA_GUARD)


@dataclass
class SensingModel:
    """Per-(player, carrier) detector statistics.

    mu0/mu1 are the detector means under idle/occupied carriers (mu1 > mu0),
    sigma0/sigma1 the corresponding standard deviations; f is the per-player
    sampling frequency and T the frame duration.  snr_det defaults to the
    detection SNR implied by the statistics, (mu1 - mu0) / sigma0.
    """

    mu0: np.ndarray      # (Q, N)
    mu1: np.ndarray
    sigma0: np.ndarray
    sigma1: np.ndarray
    f: np.ndarray        # (Q,)
    T: np.ndarray        # (Q,)
    snr_det: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("mu0", "mu1", "sigma0", "sigma1", "f", "T"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.mu1 <= self.mu0):
            raise ValueError("detector mean must increase under occupancy (mu1 > mu0)")
        if np.any(self.sigma0 <= 0) or np.any(self.sigma1 <= 0):
            raise ValueError("detector standard deviations must be positive")
        if np.any(self.f <= 0) or np.any(self.T <= 0):
            raise ValueError("sampling frequency and frame duration must be positive")
        if self.snr_det is None:
            self.snr_det = (self.mu1 - self.mu0) / self.sigma0
        else:
            self.snr_det = np.asarray(self.snr_det, dtype=float)

    @property
    def dmu(self):
        return self.mu1 - self.mu0

    @classmethod
    def from_snr(cls, Q, N, snr_det=1.0, noise_scale=1.0, f=1.0, T=10.0):
        """Energy-detector statistics synthesized from a detection SNR.

        Per-sample moments of the normalized energy statistic: mean noise_scale
        under idle, noise_scale*(1+snr) under occupancy, with matching spreads.
        """
        snr = np.broadcast_to(np.asarray(snr_det, dtype=float), (Q, N)).copy()
        ns = np.broadcast_to(np.asarray(noise_scale, dtype=float), (Q, N)).copy()
        return cls(
            mu0=ns,
            mu1=ns * (1.0 + snr),
            sigma0=ns,
            sigma1=ns * (1.0 + snr),
            f=np.broadcast_to(np.asarray(f, dtype=float), (Q,)).copy(),
            T=np.broadcast_to(np.asarray(T, dtype=float), (Q,)).copy(),
        )


def pfa_pd(gamma, tau, model, q, k):
    """False-alarm and detection probabilities of the threshold test.

    pfa = Q(sqrt(tau f) (gamma - mu0) / sigma0),
    pd  = Q(sqrt(tau f) (gamma - mu1) / sigma1).
    """
    scale = np.sqrt(tau * model.f[q])
    pfa = q_function(scale * (gamma - model.mu0[q, k]) / model.sigma0[q, k])
    pd = q_function(scale * (gamma - model.mu1[q, k]) / model.sigma1[q, k])
    return pfa, pd


def pmiss_hat(pfa, tau_hat, model, q, k):
    """Missed-detection probability as a function of (pfa, tau_hat).

    Equals 1 - pd with tau_hat = sqrt(tau f); strictly decreasing in tau_hat
    and strictly increasing as pfa decreases (the sensing trade-off).
    """
    pfa = _clamp_pfa(pfa)
    v = q_inverse(pfa)
    s = (model.dmu[q, k] * tau_hat - model.sigma0[q, k] * v) / model.sigma1[q, k]
    return q_function(s)


def pmiss_hat_all(pfa, tau_hat, model, q, order=0):
    """Vectorized missed-detection probability over all carriers of player q.

    With order >= 1 the first derivatives in (tau_hat, pfa) are appended, and
    with order >= 2 the second derivatives as well.
    """
    out = K.pmiss_terms(tau_hat, pfa, model.sigma0[q], model.sigma1[q],
                        model.dmu[q], order=max(order, 1))
    if order == 0:
        return out[0]
    if order == 1:
        return out[:3]
    return out


def threshold_from_pfa(pfa, tau, model, q, k):
    """Decision threshold gamma achieving the requested false-alarm rate."""
    pfa = float(_clamp_pfa(pfa))
    scale = np.sqrt(tau * model.f[q])
    return model.mu0[q, k] + model.sigma0[q, k] * q_inverse(pfa) / scale
