"""Small-scale fading, uplink pilot training and LMMSE channel estimation.

Large-scale fading is i.i.d. across antennas, so every per-link covariance
(D, Psi, Theta) is a scalar multiple of the identity. They are stored as
(|B|, |U|) arrays of those scalars; :meth:`ChannelSet.covariances` expands a
link to full M x M matrices when needed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pilots import PilotAssignment


def noise_power(density_dbm_hz: float, figure_db: float, bandwidth_hz: float) -> float:
    """Thermal noise power in watts over ``bandwidth_hz``."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    dbm = density_dbm_hz + 10.0 * np.log10(bandwidth_hz) + figure_db
    return float(10.0 ** ((dbm - 30.0) / 10.0))


def complex_normal(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    scale = np.sqrt(np.asarray(variance) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_true_channels(gain, antennas: int, rng: np.random.Generator) -> np.ndarray:
    """(B, U, M) Rayleigh channels with per-link power ``gain``."""
    gain = np.asarray(gain, dtype=float)
    g = complex_normal(rng, gain.shape + (antennas,))
    return np.sqrt(gain)[..., None] * g


def pilot_phase(h, pilots: PilotAssignment, pilot_power: float, sigma2: float,
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Received pilot block Y_r (B, M, tau_p) at every RRH.

    ``rng=None`` gives the noiseless signal.
    """
    h = np.asarray(h)
    y = np.sqrt(pilot_power) * np.einsum("rum,uk->rmk", h, pilots.sequences)
    if rng is not None and sigma2 > 0:
        y = y + complex_normal(rng, y.shape, sigma2)
    return y


def _pilot_load(gain, pilots: PilotAssignment, pilot_power: float) -> np.ndarray:
    """(B, tau_p): total received pilot power per sequence at each RRH."""
    gain = np.asarray(gain, dtype=float)
    load = np.zeros((gain.shape[0], pilots.tau_p))
    for k in range(pilots.tau_p):
        load[:, k] = pilot_power * gain[:, pilots.pilot_index == k].sum(axis=1)
    return load


def lmmse_estimate(y, gain, pilots: PilotAssignment, pilot_power: float, sigma2: float) -> np.ndarray:
    """LMMSE estimates of every channel h_ru from the pilot blocks.

    Uses the fact that the pilot matrix is unitary: the Kronecker-structured
    covariance of vec(Y_r) diagonalizes in the pilot basis, and the estimate
    reduces to a scaled projection of Y_r on the user's own pilot.
    """
    gain = np.asarray(gain, dtype=float)
    load = _pilot_load(gain, pilots, pilot_power)
    # Y_r Phi_u^H for every (r, u): (B, U, M)
    proj = np.einsum("rmk,uk->rum", y, pilots.sequences.conj())
    scale = np.sqrt(pilot_power) * gain / (load[:, pilots.pilot_index] + sigma2)
    return scale[..., None] * proj


def error_covariances(gain, pilots: PilotAssignment, pilot_power: float, sigma2: float):
    """Scalar (psi, theta) per link: Psi_ru = psi I_M, Theta_ru = theta I_M.

    psi = d_ru^2 / (sum_{co-pilot u'} d_ru' + sigma2 / p_u); theta = d - psi.
    """
    gain = np.asarray(gain, dtype=float)
    load = _pilot_load(gain, pilots, pilot_power) / pilot_power
    psi = gain**2 / (load[:, pilots.pilot_index] + sigma2 / pilot_power)
    theta = gain - psi
    return psi, np.maximum(theta, 0.0)


@dataclass(frozen=True)
class ChannelSet:
    h: np.ndarray  # (B, U, M) true channels
    h_hat: np.ndarray  # (B, U, M) estimates, available for every pair
    gain: np.ndarray  # (B, U) diagonal of D_ru
    psi: np.ndarray  # (B, U) scalar of Psi_ru
    theta: np.ndarray  # (B, U) scalar of Theta_ru
    noise_power: float
    pilot_power: float
    perfect: bool = False

    @property
    def antennas(self) -> int:
        return self.h.shape[-1]

    def covariances(self, r: int, u: int):
        """Full M x M (D, Psi, Theta) for link (r, u)."""
        eye = np.eye(self.antennas)
        return self.gain[r, u] * eye, self.psi[r, u] * eye, self.theta[r, u] * eye


def perfect_csi(h, gain, sigma2: float, pilot_power: float = 0.0) -> ChannelSet:
    """Estimates equal to the truth, zero error covariance."""
    gain = np.asarray(gain, dtype=float)
    return ChannelSet(h=h, h_hat=h, gain=gain, psi=gain.copy(), theta=np.zeros_like(gain),
                      noise_power=sigma2, pilot_power=pilot_power, perfect=True)


def estimate_channels(h, gain, pilots: PilotAssignment, pilot_power: float, sigma2: float,
                      rng: np.random.Generator) -> ChannelSet:
    """Run one pilot phase and return estimates with their covariances."""
    y = pilot_phase(h, pilots, pilot_power, sigma2, rng)
    h_hat = lmmse_estimate(y, gain, pilots, pilot_power, sigma2)
    psi, theta = error_covariances(gain, pilots, pilot_power, sigma2)
    return ChannelSet(h=h, h_hat=h_hat, gain=np.asarray(gain, dtype=float), psi=psi, theta=theta,
                      noise_power=sigma2, pilot_power=pilot_power)
