"""Narrowband multiple-access channel with channel-inversion power control."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChannelConfig",
    "GainBelowFloor",
    "sigma_from_snr",
    "draw_fading",
    "power_control",
    "mac_transmit",
    "complex_noise",
    "trial_rng",
]


class GainBelowFloor(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    sigma_z: float = 0.0
    fading: str = "none"
    gain_floor: float = 0.05

    def __post_init__(self):
        if self.sigma_z < 0:
            raise ValueError("sigma_z must be non-negative")
        if self.gain_floor <= 0:
            raise ValueError("gain_floor must be positive")
        if self.fading not in ("none", "rayleigh"):
            raise ValueError(f"unknown fading mode {self.fading!r}")


def sigma_from_snr(snr_db: float, x_norm: float) -> float:
    """Noise std for ``SNR = 20 log10(||x||_2 / sigma_z)``."""
    if x_norm <= 0:
        raise ValueError("x_norm must be positive")
    if np.isposinf(snr_db):
        return 0.0
    return float(x_norm * 10.0 ** (-snr_db / 20.0))


def draw_fading(K: int, config: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-node complex gains; Rayleigh draws below the floor are redrawn."""
    if config.fading == "none":
        return np.ones(K, dtype=complex)
    h = np.empty(K, dtype=complex)
    for k in range(K):
        while True:
            v = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
            if abs(v) >= config.gain_floor:
                h[k] = v
                break
    return h


def power_control(h, gain_floor: float = 0.0):
    """Channel inversion ``p = conj(h) / |h|^2`` so that ``h p = 1``."""
    h = np.asarray(h, dtype=complex)
    mag2 = np.abs(h) ** 2
    if np.any(np.sqrt(mag2) < gain_floor) or np.any(mag2 == 0):
        raise GainBelowFloor(f"channel gain below floor {gain_floor}")
    p = np.conj(h) / mag2
    return complex(p) if p.ndim == 0 else p


def complex_noise(sigma_z: float, rng: np.random.Generator, size=None):
    """Circular complex Gaussian noise with total variance ``sigma_z**2``."""
    scale = sigma_z / np.sqrt(2)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def mac_transmit(symbols, h, p, sigma_z: float, rng: np.random.Generator | None = None) -> complex:
    """Received superposition ``sum_k h_k p_k s_k + z``."""
    symbols = np.asarray(symbols, dtype=complex)
    h = np.broadcast_to(np.asarray(h, dtype=complex), symbols.shape)
    p = np.broadcast_to(np.asarray(p, dtype=complex), symbols.shape)
    if symbols.shape != h.shape:
        raise ValueError("symbols and gains must have equal length")
    y = complex(np.sum(h * p * symbols))
    if sigma_z > 0:
        if rng is None:
            raise ValueError("a random generator is required when sigma_z > 0")
        y += complex(complex_noise(sigma_z, rng))
    return y


def trial_rng(master_seed: int, *labels) -> np.random.Generator:
    """Independent stream for one trial.

    The stream is seeded by ``SeedSequence([master_seed, *keys])`` where each
    string label becomes its CRC-32 and integers pass through unchanged, e.g.
    ``trial_rng(seed, "channelcomp-sum", snr_index, trial_index)``.
    """
    keys = [int(master_seed)]
    for lab in labels:
        keys.append(zlib.crc32(lab.encode()) if isinstance(lab, str) else int(lab))
    return np.random.default_rng(np.random.SeedSequence(keys))
