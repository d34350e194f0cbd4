"""Reference schemes: analog AirComp and per-node orthogonal (OFDMA) links."""

from __future__ import annotations

from collections import Counter
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .channel import complex_noise
from .functions import FunctionSpec
from .modem import Encoder, Quantizer

__all__ = [
    "NomographicMap",
    "nomographic_map",
    "aircomp_scale",
    "aircomp_estimate",
    "ofdma_estimate",
    "ofdma_detect",
    "nearest_levels",
]


@dataclass(frozen=True)
class NomographicMap:
    """``f = psi(sum_k phi(x_k))`` with a shared pre-processing map."""

    kind: str
    phi: Callable[[np.ndarray], np.ndarray]
    psi: Callable[[float], float]
    phi_bound: float
    # psi(u) is undefined for u <= psi_floor (smooth max only)
    psi_floor: float | None = None
    fallback: float = 0.0


def nomographic_map(kind: str, lo: float = 0.0, hi: float = 7.0, delta: float = 1e-3,
                    temperature: float | None = None) -> NomographicMap:
    """Pre/post-processing pair for ``kind`` on inputs in ``[lo, hi]``.

    ``phi_bound`` is ``max |phi(v)|`` over the input interval, used for the
    transmit scaling.  Product inputs are clamped to ``delta`` before the log;
    max uses the log-sum-exp smooth maximum with ``temperature``
    (default ``10 / (hi - lo)``).
    """
    if kind == "sum":
        return NomographicMap(kind, lambda v: v, lambda u: u, max(abs(lo), abs(hi)))
    if kind == "quadratic":
        return NomographicMap(kind, np.square, lambda u: u, max(lo * lo, hi * hi))
    if kind == "product":
        return NomographicMap(
            kind,
            lambda v: np.log(np.maximum(v, delta)),
            np.exp,
            max(abs(np.log(max(lo, delta))), abs(np.log(max(hi, delta)))),
        )
    if kind == "max":
        t = 10.0 / (hi - lo) if temperature is None else temperature
        return NomographicMap(
            kind,
            lambda v: np.exp(t * v),
            lambda u: np.log(u) / t,
            float(np.exp(t * max(abs(lo), abs(hi)))),
            psi_floor=0.0,
            fallback=lo,
        )
    raise ValueError(f"no nomographic map for {kind!r}")


def aircomp_scale(x: np.ndarray, nmap: NomographicMap) -> float:
    """Analog amplitude scale matching the digital design's peak symbol magnitude."""
    return float(np.max(np.abs(x)) / nmap.phi_bound)


def aircomp_estimate(values, nmap: NomographicMap, sigma_z: float, scale: float,
                     rng: np.random.Generator | None = None, clamps: Counter | None = None) -> float:
    """One analog over-the-air computation.

    Nodes send ``scale * phi(x_k)``; the receiver sees the real sum plus real
    Gaussian noise of std ``sigma_z`` and returns ``psi(y / scale)``.  A
    receive value outside ``psi``'s domain returns the map's fallback and is
    counted in ``clamps["psi"]``.
    """
    s = scale * nmap.phi(np.asarray(values, dtype=float))
    y = float(np.sum(s))
    if sigma_z > 0:
        y += sigma_z * rng.standard_normal()
    u = y / scale
    if nmap.psi_floor is not None and u <= nmap.psi_floor:
        if clamps is not None:
            clamps["psi"] += 1
        return float(nmap.fallback)
    return float(nmap.psi(u))


def nearest_levels(y, x) -> np.ndarray:
    """Per-symbol minimum-distance detection (lowest level on ties)."""
    y = np.asarray(y, dtype=complex)
    d = np.abs(y[..., None] - np.asarray(x)[None, :])
    return np.argmin(d, axis=-1)


def ofdma_detect(levels, encoder: Encoder, sigma_z: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Levels detected on K orthogonal uses, each with its own complex noise draw."""
    sym = encoder(np.asarray(levels))
    if sigma_z > 0:
        sym = sym + complex_noise(sigma_z, rng, sym.shape)
    return nearest_levels(sym, encoder.x)


def ofdma_estimate(levels, encoder: Encoder, spec: FunctionSpec, sigma_z: float,
                   rng: np.random.Generator | None = None, quantizer: Quantizer | None = None) -> float:
    """Decode every node on its own channel, then evaluate ``f``.

    With a ``quantizer`` the detected levels are dequantized and ``f`` is
    evaluated on the reconstructed values; otherwise on the levels through
    ``spec``.
    """
    est = ofdma_detect(levels, encoder, sigma_z, rng)
    if quantizer is not None:
        return spec.evaluate_raw(quantizer.dequantize(est))
    return spec(est)
