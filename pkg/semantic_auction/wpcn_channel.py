"""Harvest-then-transmit physical layer: channels, harvested energy, SNR and bit budgets."""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

ArrayLike = Union[float, np.ndarray]

# Feasibility gain on the received-energy term; without it nearly every device is infeasible.
# Output of experiments.calibrate_budget_gain at its defaults: median feature dimension 8
# at d_AU = 10 m, 20000 draws from CALIBRATION_SEED, relative tolerance 1e-4.
CALIBRATED_BUDGET_GAIN = 97.694
CALIBRATION_SEED = 20240601


def to_watts(level_dbm: ArrayLike) -> ArrayLike:
    """Convert a power level from dBm to watts.

    Args:
        level_dbm: Power in decibel-milliwatts.

    Returns:
        Power in watts, 10^((level_dbm - 30) / 10).
    """
    watts = np.power(10.0, (np.asarray(level_dbm, dtype=float) - 30.0) / 10.0)
    return float(watts) if watts.ndim == 0 else watts


class WpcnParams(BaseModel):
    """Physical-layer constants of the wireless powered network."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    K: int = Field(default=10, ge=1)
    eta: float = 0.8
    tau: float = Field(default=1.0, gt=0)
    P_dbm: float = 35.0
    sigma2_dbm: float = -80.0
    E_cir: float = Field(default=0.5e-3, ge=0)
    R: float = Field(default=2.0, gt=0)
    alpha: float = Field(default=2.0, gt=0)
    ref_loss: float = Field(default=1e-3, gt=0)
    budget_gain: float = Field(default=CALIBRATED_BUDGET_GAIN, ge=1)

    @field_validator("eta")
    @classmethod
    def _eta_in_unit_interval(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        return value

    @property
    def P_watts(self) -> float:
        return to_watts(self.P_dbm)

    @property
    def sigma2_watts(self) -> float:
        return to_watts(self.sigma2_dbm)

    @property
    def phi(self) -> float:
        """SNR threshold of the fixed-rate link, 2^R - 1."""
        return 2.0 ** self.R - 1.0

    @property
    def rho(self) -> float:
        return self.eta * self.P_watts / self.sigma2_watts

    @property
    def xi(self) -> float:
        return self.E_cir / self.sigma2_watts

    def path_variance(self, d_AU: ArrayLike) -> ArrayLike:
        """Per-entry channel variance ref_loss * d_AU^(-alpha)."""
        return self.ref_loss * np.power(d_AU, -self.alpha)


@dataclass(frozen=True)
class ChannelRealization:
    """Downlink and uplink channel vectors of one device."""

    h: np.ndarray
    g: np.ndarray
    d_AU: float
    h_norm2: float
    g_norm2: float

    @classmethod
    def from_vectors(cls, h: np.ndarray, g: np.ndarray, d_AU: float) -> "ChannelRealization":
        """Build a realization and cache the squared norms.

        Args:
            h: K complex downlink amplitudes.
            g: K complex uplink amplitudes.
            d_AU: Device to access-point distance in meters.

        Returns:
            The realization with h_norm2 and g_norm2 filled in.
        """
        h = np.asarray(h, dtype=complex)
        g = np.asarray(g, dtype=complex)
        if h.shape != g.shape or h.ndim != 1:
            raise ValueError("h and g must be 1-D vectors of equal length")
        return cls(
            h=h,
            g=g,
            d_AU=float(d_AU),
            h_norm2=float(np.sum(np.abs(h) ** 2)),
            g_norm2=float(np.sum(np.abs(g) ** 2)),
        )

    @property
    def K(self) -> int:
        return int(self.h.shape[0])


def _check_distance(d_AU: ArrayLike) -> None:
    if np.any(np.asarray(d_AU) <= 0):
        raise ValueError(f"d_AU must be positive, got {d_AU}")


def _circular_gaussian(rng: np.random.Generator, variance: ArrayLike, shape: Tuple[int, ...]) -> np.ndarray:
    # real and imaginary parts each carry half the variance
    scale = np.sqrt(np.asarray(variance) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channel(rng: np.random.Generator, params: WpcnParams, d_AU: float) -> ChannelRealization:
    """Draw one Rayleigh-faded channel pair for a device.

    Args:
        rng: Seeded numpy random generator.
        params: Physical-layer constants.
        d_AU: Device to access-point distance in meters.

    Returns:
        A realization whose entries are i.i.d. circularly symmetric complex Gaussian
        with variance ref_loss * d_AU^(-alpha).

    Raises:
        ValueError: If d_AU is not positive.
    """
    _check_distance(d_AU)
    omega = params.path_variance(float(d_AU))
    h = _circular_gaussian(rng, omega, (params.K,))
    g = _circular_gaussian(rng, omega, (params.K,))
    return ChannelRealization.from_vectors(h, g, d_AU)


def sample_channels(
    rng: np.random.Generator, params: WpcnParams, d_AU: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised channel sampler returning only the squared norms.

    Args:
        rng: Seeded numpy random generator.
        params: Physical-layer constants.
        d_AU: Array of distances, any shape.

    Returns:
        Tuple (h_norm2, g_norm2), each shaped like d_AU.
    """
    d_AU = np.asarray(d_AU, dtype=float)
    _check_distance(d_AU)
    omega = params.path_variance(d_AU)
    # |x|^2 of a CN(0, omega) entry is omega/2 times a sum of two squared normals
    h_parts = rng.standard_normal(d_AU.shape + (params.K, 2))
    g_parts = rng.standard_normal(d_AU.shape + (params.K, 2))
    h_norm2 = omega / 2.0 * np.sum(h_parts ** 2, axis=(-2, -1))
    g_norm2 = omega / 2.0 * np.sum(g_parts ** 2, axis=(-2, -1))
    return h_norm2, g_norm2


def harvested_energy(params: WpcnParams, ch: ChannelRealization) -> float:
    """Energy collected during the harvest phase, eta * tau * P * |h|^2."""
    return params.eta * params.tau * params.P_watts * ch.h_norm2


def _link_numerator(params: WpcnParams, h_norm2: ArrayLike, g_norm2: ArrayLike) -> ArrayLike:
    received = params.tau * params.rho * params.budget_gain * h_norm2 * g_norm2
    return received - params.xi * g_norm2


def snr(params: WpcnParams, ch: ChannelRealization, tau_tx: float) -> float:
    """Received SNR at the access point after MRC combining.

    Args:
        params: Physical-layer constants.
        ch: Channel realization of the device.
        tau_tx: Information-transmission time in seconds.

    Returns:
        The SNR; negative when harvested energy is below circuit consumption.

    Raises:
        ValueError: If tau_tx is not positive.
    """
    if tau_tx <= 0:
        raise ValueError(f"tau_tx must be positive, got {tau_tx}")
    return float(_link_numerator(params, ch.h_norm2, ch.g_norm2) / tau_tx)


def transmission_time(params: WpcnParams, ch: ChannelRealization) -> float:
    """Transmission time that meets the SNR threshold phi, clamped at 0."""
    return float(max(0.0, _link_numerator(params, ch.h_norm2, ch.g_norm2) / params.phi))


def bits_budget(params: WpcnParams, ch: ChannelRealization) -> float:
    """Number of bits the device can send with its harvested energy."""
    return params.R * transmission_time(params, ch)


def bits_budget_batch(params: WpcnParams, h_norm2: np.ndarray, g_norm2: np.ndarray) -> np.ndarray:
    """Vectorised bits_budget over arrays of squared norms."""
    numerator = _link_numerator(params, np.asarray(h_norm2), np.asarray(g_norm2))
    return params.R * np.maximum(0.0, numerator / params.phi)
