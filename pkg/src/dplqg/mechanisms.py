"""Gaussian mechanism primitives.

Noise is calibrated as ``sigma = sensitivity * kappa(eps, delta)`` with

    kappa(eps, delta) = (K + sqrt(K**2 + 2*eps)) / (2*eps),   K = Qinv(delta),

where Q is the standard normal upper-tail probability.  The minimal admissible
sigma is always used.

Random draws go through numpy's ``PCG64`` bit generator; normal variates use
numpy's ziggurat sampler (``Generator.standard_normal``).  A master seed is
split into independent per-agent, per-role substreams with
``SeedSequence(seed, spawn_key=(run, agent, role))``, so adding an agent or a
run leaves every other stream untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .matrix import max_singular_value

ROLE_CODES = {"reference": 0, "initial": 1, "output": 2, "process": 3, "coupling": 4}

_BISECT_TOL = 1e-6
_NEWTON_TOL = 1e-12


@dataclass(frozen=True)
class PrivacyParams:
    """An (epsilon, delta) pair with epsilon > 0 and 0 < delta < 1/2."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise DomainError(f"epsilon must be positive and finite, got {self.epsilon}")
        if not 0.0 < self.delta < 0.5:
            raise DomainError(f"delta must lie in (0, 0.5), got {self.delta}")


@dataclass(frozen=True)
class AdjacencyParams:
    """Adjacency radii: ``trajectory_radius`` (l2 over output trajectories) and
    ``static_radius`` (2-norm over the reference limit vector)."""

    trajectory_radius: float = 1.0
    static_radius: float = 1.0

    def __post_init__(self):
        if not (self.trajectory_radius > 0 and self.static_radius > 0):
            raise DomainError("adjacency radii must be strictly positive")


def q_function(y: float) -> float:
    """Standard normal upper-tail probability P(Z > y)."""
    if not math.isfinite(y):
        raise DomainError(f"q_function needs a finite argument, got {y}")
    return 0.5 * math.erfc(y / math.sqrt(2.0))


def _normal_pdf(y: float) -> float:
    return math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)


def q_inverse(p: float) -> float:
    """Inverse of :func:`q_function` on (0, 0.5).

    A bracketing bisection on [0, 40] gets within 1e-6, then Newton steps
    polish the root to 1e-12.
    """
    if not (0.0 < p < 0.5):
        raise DomainError(f"q_inverse is defined on (0, 0.5), got {p}")
    lo, hi = 0.0, 40.0
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if q_function(mid) > p:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    for _ in range(50):
        pdf = _normal_pdf(y)
        if pdf == 0.0:
            break
        step = (q_function(y) - p) / pdf
        y += step
        if abs(step) <= _NEWTON_TOL:
            break
    return y


def kappa(epsilon: float, delta: float) -> float:
    """Noise multiplier per unit sensitivity."""
    params = PrivacyParams(epsilon, delta)
    k = q_inverse(params.delta)
    return (k + math.sqrt(k * k + 2.0 * params.epsilon)) / (2.0 * params.epsilon)


def noise_scale(params: PrivacyParams, sensitivity: float) -> float:
    """Smallest Gaussian standard deviation giving ``params``-privacy for a
    query with the given l2 sensitivity."""
    if not sensitivity >= 0:
        raise DomainError(f"sensitivity must be non-negative, got {sensitivity}")
    if sensitivity == 0:
        return 0.0
    return sensitivity * kappa(params.epsilon, params.delta)


def dsigma_depsilon(epsilon: float, delta: float, sensitivity: float = 1.0) -> float:
    """Derivative of :func:`noise_scale` with respect to epsilon (always < 0
    for positive sensitivity)."""
    params = PrivacyParams(epsilon, delta)
    k = q_inverse(params.delta)
    root = math.sqrt(k * k + 2.0 * epsilon)
    return sensitivity / (2.0 * epsilon) * (-(k + root) / epsilon + 1.0 / root)


def output_sensitivity(C, trajectory_radius: float) -> float:
    """l2 sensitivity of ``y = C x`` to trajectory-adjacent inputs: s1(C) * b."""
    if not trajectory_radius > 0:
        raise DomainError("trajectory radius must be positive")
    return max_singular_value(C) * trajectory_radius


def _gaussian(x, sigma: float, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if sigma < 0:
        raise DomainError("noise scale must be non-negative")
    if sigma == 0:
        return x.copy()
    return x + sigma * rng.standard_normal(x.shape)


def privatize_static(r, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Release ``r + N(0, sigma^2 I)``."""
    return _gaussian(r, sigma, rng)


def privatize_output(y, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Release one sample of a privatized output trajectory, ``y + v``.

    Callers apply this independently at every time step.
    """
    return _gaussian(y, sigma, rng)


def substream(seed: int, agent: int, role: str, run: int = 0) -> np.random.Generator:
    """Independent generator for one (run, agent, role) triple."""
    if role not in ROLE_CODES:
        raise DomainError(f"unknown stream role {role!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(run), int(agent), ROLE_CODES[role]))
    return np.random.Generator(np.random.PCG64(ss))
