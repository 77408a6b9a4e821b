"""Choosing epsilon from accuracy or cost targets.

Each guideline turns a target into a sufficient epsilon interval through an
auxiliary quantity ``eta``; an interval endpoint of the form

    (1/8) * ((1 + sqrt(36*eta + 1)) / eta)**2

guarantees the noise multiplier is at most ``eta`` for any delta in
[1e-5, 0.1], and ``1/eta`` guarantees it is at least ``eta``.  Ranges are
returned with an explicit feasibility status so sweeps never have to catch
exceptions for empty intervals; exceptions are reserved for targets that make
an ``eta`` undefined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, InfeasibleError, PreconditionError
from .matrix import as_matrix, lambda_max, lambda_min, require_pd
from .mechanisms import PrivacyParams, noise_scale, output_sensitivity
from .synthesis import AgentModel, NetworkModel, SynthesisResult, synthesize

DELTA_RANGE = (1e-5, 0.1)


@dataclass(frozen=True)
class CalibrationTarget:
    """Either an MSE band ``(B_l, B_u)`` or a cost cap ``alpha``.

    ``quantity`` says what the band constrains: ``"apriori"`` (prediction
    MSE, tr Sigma) or ``"aposteriori"`` (estimation MSE, tr Sigma_bar).
    """

    delta: float
    sensitivity: float = 1.0
    band: Optional[Tuple[float, float]] = None
    cost_cap: Optional[float] = None
    quantity: str = "apriori"

    def __post_init__(self):
        check_delta(self.delta)
        if not self.sensitivity > 0:
            raise DomainError("sensitivity must be positive")
        if (self.band is None) == (self.cost_cap is None):
            raise DomainError("give exactly one of band or cost_cap")
        if self.band is not None and not self.band[0] < self.band[1]:
            raise DomainError(f"band must satisfy B_l < B_u, got {self.band}")
        if self.quantity not in ("apriori", "aposteriori", "cost"):
            raise DomainError(f"unknown target quantity {self.quantity!r}")


@dataclass
class EpsilonRange:
    lower: float
    upper: float
    feasible: bool
    reason: str = ""
    etas: Dict[str, float] = field(default_factory=dict)

    def contains(self, epsilon: float) -> bool:
        return self.feasible and self.lower <= epsilon <= self.upper

    def samples(self, count: int = 20, cap: float = 100.0) -> np.ndarray:
        """Evenly spaced epsilons inside the range (an infinite upper end is capped)."""
        if not self.feasible:
            return np.empty(0)
        hi = min(self.upper, max(cap, 2 * self.lower))
        return np.linspace(self.lower, hi, count)

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "feasible": self.feasible,
                "reason": self.reason, "etas": dict(self.etas)}


def check_delta(delta: float) -> float:
    lo, hi = DELTA_RANGE
    if not lo <= delta <= hi:
        raise DomainError(f"delta must lie in [{lo:g}, {hi:g}] for the guidelines, got {delta}")
    return delta


def epsilon_floor(eta: float) -> float:
    """Smallest epsilon for which the noise multiplier is guaranteed <= eta."""
    if math.isinf(eta):
        return 0.0
    return ((1.0 + math.sqrt(36.0 * eta + 1.0)) / eta) ** 2 / 8.0


def output_extremes(C) -> Tuple[float, float]:
    """(C_l, C_u): smallest and largest diagonal entries of a diagonal C.

    With a common noise scale on every channel these are the extremal
    channels of the leakage bounds.
    """
    C = as_matrix(C, "C")
    d = np.diag(C)
    if C.shape[0] != C.shape[1] or np.any(C - np.diag(d)) or np.any(d <= 0):
        raise DomainError("calibration needs a square diagonal C with positive entries")
    return float(d.min()), float(d.max())


def _range(lower: float, upper: float, etas: Dict[str, float]) -> EpsilonRange:
    ok = lower <= upper
    reason = "" if ok else f"empty range: lower {lower:.6g} exceeds upper {upper:.6g}"
    return EpsilonRange(lower=lower, upper=upper, feasible=ok, reason=reason, etas=etas)


def epsilon_range_apriori(target: CalibrationTarget, A, W, C) -> EpsilonRange:
    """Epsilon interval keeping the prediction MSE tr(Sigma) inside the band."""
    if target.band is None:
        raise DomainError("a priori calibration needs a band")
    b_l, b_u = target.band
    A = as_matrix(A, "A")
    W = require_pd(W, "W")
    c_l, c_u = output_extremes(C)
    trw, lam, taa = float(np.trace(W)), lambda_min(W), float(np.sum(A * A))
    d2 = target.sensitivity ** 2
    if not b_l > trw:
        raise InfeasibleError(f"B_l = {b_l:g} must exceed tr W = {trw:g}")
    denom = taa * lam - b_l + trw
    if not denom > 0:
        raise InfeasibleError("B_l must be below tr W + tr(A'A) * lambda_min(W)")
    if not b_u > trw:
        raise InfeasibleError(f"B_u = {b_u:g} must exceed tr W = {trw:g}")
    eta1 = math.sqrt((b_l - trw) * lam * c_u ** 2 / (d2 * denom))
    eta2 = math.inf if taa == 0 else math.sqrt((b_u - trw) * c_l ** 2 / (d2 * taa))
    return _range(epsilon_floor(eta2), 1.0 / eta1, {"eta1": eta1, "eta2": eta2})


def epsilon_range_aposteriori(target: CalibrationTarget, n: int, W, C) -> EpsilonRange:
    """Epsilon interval keeping the estimation MSE tr(Sigma_bar) inside the band."""
    if target.band is None:
        raise DomainError("a posteriori calibration needs a band")
    b_l, b_u = target.band
    W = require_pd(W, "W")
    c_l, c_u = output_extremes(C)
    lam = lambda_min(W)
    d2 = target.sensitivity ** 2
    room = n - b_l / lam
    if not room > 0:
        raise InfeasibleError(f"B_l = {b_l:g} must be below n * lambda_min(W) = {n * lam:g}")
    if not b_u > 0:
        raise InfeasibleError("B_u must be positive")
    eta3 = math.sqrt(max(b_l, 0.0) * c_u ** 2 / (d2 * room))
    eta4 = math.sqrt(b_u * c_l ** 2 / (n * d2))
    upper = math.inf if eta3 == 0 else 1.0 / eta3
    return _range(epsilon_floor(eta4), upper, {"eta3": eta3, "eta4": eta4})


def epsilon_for_cost(alpha: float, net: NetworkModel, synth: SynthesisResult, delta: float,
                     sensitivity: float = 1.0) -> float:
    """Smallest epsilon that guarantees the closed-form private cost stays at
    or below ``alpha`` when every agent uses sigma = sigma_bar = noise scale.

    The reference vector is the released ``x_tilde`` held by ``net``.
    """
    from .cost import offset_credit, tracking_gain_H

    check_delta(delta)
    c_l, _ = output_extremes(net.C)
    r = net.x_tilde
    kmax = lambda_max(synth.K)
    num = alpha - kmax * float(np.trace(net.W)) - float(r @ net.Q @ r) + offset_credit(net, synth.K, synth.g)
    if not num > 0:
        raise InfeasibleError(f"cost cap {alpha:g} does not exceed the noise-free cost floor")
    H = tracking_gain_H(net.A, net.B, synth.L, synth.M)
    den = sensitivity ** 2 * (kmax * float(np.sum(net.A * net.A)) / c_l ** 2
                              + float(np.trace(H.T @ net.R @ H)) + float(np.trace(net.Q)))
    return epsilon_floor(math.sqrt(num / den))


@dataclass
class ValidationReport:
    epsilon: float
    delta: float
    sigma: float
    trace_sigma: float
    trace_sigma_bar: float
    J_total: float
    checks: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "delta": self.delta, "sigma": self.sigma,
                "trace_sigma": self.trace_sigma, "trace_sigma_bar": self.trace_sigma_bar,
                "J_total": self.J_total, "checks": dict(self.checks), "passed": self.passed}


def validate_epsilon(epsilon: float, delta: float, target: CalibrationTarget, net: NetworkModel,
                     gains=None) -> ValidationReport:
    """Recompute the noise for ``epsilon`` and test the target on exact values.

    Output and reference noise are both set to the calibrated sigma; the
    Riccati equations are solved afresh and compared against the target.
    """
    from .cost import total_private_cost

    params = PrivacyParams(epsilon, delta)
    sigma = noise_scale(params, target.sensitivity)
    tnet = net.with_noise(sigma, sigma)
    syn = synthesize(tnet, gains=gains)
    tr_s, tr_sb = float(np.trace(syn.Sigma)), float(np.trace(syn.Sigma_bar))
    J = total_private_cost(tnet, syn).J_total
    checks = {}
    if target.band is not None:
        value = tr_s if target.quantity == "apriori" else tr_sb
        checks["above_lower"] = value >= target.band[0]
        checks["below_upper"] = value <= target.band[1]
    if target.cost_cap is not None:
        checks["cost_cap"] = J <= target.cost_cap
    return ValidationReport(epsilon=epsilon, delta=delta, sigma=sigma, trace_sigma=tr_s,
                            trace_sigma_bar=tr_sb, J_total=J, checks=checks)


def epsilon_range_network(agents: Sequence[AgentModel], target: CalibrationTarget,
                          strict_paper: bool = False) -> EpsilonRange:
    """Per-agent ranges (each agent's own block MSE against the band, each
    with its own output sensitivity) intersected across the network.

    ``strict_paper=True`` refuses heterogeneous networks, where the shared
    sensitivity assumption of the guidelines does not hold.
    """
    if not agents:
        raise DomainError("no agents")
    sens = [output_sensitivity(a.C, a.adjacency.trajectory_radius) for a in agents]
    if strict_paper:
        first = agents[0]
        same = all(
            np.array_equal(a.A, first.A) and np.array_equal(a.C, first.C) and np.array_equal(a.W, first.W)
            for a in agents
        ) and len(set(sens)) == 1
        if not same:
            raise PreconditionError("strict mode needs identical agents with a shared sensitivity")
    lower, upper, etas = 0.0, math.inf, {}
    for idx, (ag, s) in enumerate(zip(agents, sens)):
        t = CalibrationTarget(delta=target.delta, sensitivity=s, band=target.band, quantity=target.quantity)
        if target.quantity == "apriori":
            rng = epsilon_range_apriori(t, ag.A, ag.W, ag.C)
        else:
            rng = epsilon_range_aposteriori(t, ag.n, ag.W, ag.C)
        lower, upper = max(lower, rng.lower), min(upper, rng.upper)
        etas.update({f"{k}[{idx}]": v for k, v in rng.etas.items()})
    return _range(lower, upper, etas)
