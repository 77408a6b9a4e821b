"""Average-cost accounting for the private controller.

The closed-form total cost splits into an estimation part
tr(K Sigma + (Q - K) Sigma_bar), a deterministic tracking part
r'Qr - g'B(R + B'KB)^-1 B'g, and a penalty for the noisy reference,
tr(Q Wbar) + tr(H'RH Wbar) with H = M [I - (A + BL)']^-1.

:func:`expected_tracking_cost` evaluates the same average cost without that
reference-penalty shortcut: it propagates the reference noise through the
closed-loop steady state exactly.  The two agree when Wbar = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .errors import DomainError, PreconditionError
from .matrix import as_matrix, lambda_max, lambda_min, solve_linear, spectral_radius, symmetrize
from .mechanisms import PrivacyParams, dsigma_depsilon, noise_scale
from .synthesis import (
    NONPRIVATE_TAU,
    NetworkModel,
    SynthesisResult,
    solve_reference_offset,
    synthesize,
    synthesize_gains,
)

logger = logging.getLogger(__name__)


def tracking_gain_H(A, B, L, M) -> np.ndarray:
    """H = M [I - (A + BL)']^-1."""
    A, B, L, M = (as_matrix(x) for x in (A, B, L, M))
    X = np.eye(A.shape[0]) - (A + B @ L).T
    return solve_linear(X.T, M.T).T


def reference_privacy_cost(Q, R, H, Wbar) -> float:
    """tr(Q Wbar) + tr(H'RH Wbar)."""
    Q, R, H, Wbar = (as_matrix(x) for x in (Q, R, H, Wbar))
    return float(np.trace(Q @ Wbar) + np.trace(H.T @ R @ H @ Wbar))


def offset_credit(net: NetworkModel, K, g) -> float:
    """g'B (R + B'KB)^-1 B'g."""
    Bg = net.B.T @ g
    return float(Bg @ np.linalg.solve(net.R + net.B.T @ K @ net.B, Bg))


def estimation_cost(Q, K, Sigma, Sigma_bar) -> float:
    return float(np.trace(K @ Sigma) + np.trace((Q - K) @ Sigma_bar))


@dataclass
class CostReport:
    J_total: float
    J_nonprivate: float
    overhead: float
    reference_penalty: float
    components: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "J_total": self.J_total,
            "J_nonprivate": self.J_nonprivate,
            "overhead": self.overhead,
            "reference_penalty": self.reference_penalty,
            "components": dict(self.components),
        }


def _closed_form(net: NetworkModel, synth: SynthesisResult, r: np.ndarray, g: np.ndarray):
    H = tracking_gain_H(net.A, net.B, synth.L, synth.M)
    parts = {
        "estimation": estimation_cost(net.Q, synth.K, synth.Sigma, synth.Sigma_bar),
        "reference_quadratic": float(r @ net.Q @ r),
        "offset_credit": -offset_credit(net, synth.K, g),
        "reference_state_penalty": float(np.trace(net.Q @ net.Wbar)),
        "reference_input_penalty": float(np.trace(H.T @ net.R @ H @ net.Wbar)),
    }
    return sum(parts.values()), parts


def total_private_cost(net: NetworkModel, synth: SynthesisResult, reference=None,
                       tau: float = NONPRIVATE_TAU) -> CostReport:
    """Closed-form average cost with and without privacy.

    ``reference`` is the vector in the quadratic tracking term; it defaults to
    the released ``x_tilde`` because that is what the cloud holds.  The
    non-private baseline reuses the same code path with V = tau*I and Wbar = 0
    (and the same reference vector), so the difference of the two reports is
    purely the privacy overhead.
    """
    r = net.x_tilde if reference is None else np.asarray(reference, dtype=float)
    g = synth.g if reference is None else solve_reference_offset(net, synth.K, r)
    total, parts = _closed_form(net, synth, r, g)

    base_net = net.without_privacy(tau).with_reference(r)
    base = synthesize(base_net, gains=(synth.K, synth.L, synth.M))
    baseline, _ = _closed_form(base_net, base, r, g)
    penalty = parts["reference_state_penalty"] + parts["reference_input_penalty"]
    return CostReport(J_total=total, J_nonprivate=baseline, overhead=privacy_overhead(net, synth),
                      reference_penalty=penalty, components=parts)


def privacy_overhead(net: NetworkModel, synth: SynthesisResult) -> float:
    """tr(K Sigma + (Q - K) Sigma_bar) - tr(K W) + tr(Q Wbar) + tr(H'RH Wbar).

    The subtracted tr(KW) is the estimation cost of a noise-free output, which
    assumes C has full column rank.
    """
    H = tracking_gain_H(net.A, net.B, synth.L, synth.M)
    return (estimation_cost(net.Q, synth.K, synth.Sigma, synth.Sigma_bar) - float(np.trace(synth.K @ net.W))
            + reference_privacy_cost(net.Q, net.R, H, net.Wbar))


def steady_state_maps(net: NetworkModel, synth: SynthesisResult):
    """Linear maps from the reference the cloud uses to the closed-loop
    steady-state mean state and input: x_ss = Tx r, u_ss = Tu r."""
    n = net.n
    Acl = net.A + net.B @ synth.L
    G = -solve_linear(np.eye(n) - Acl.T, net.Q)
    Tx = solve_linear(np.eye(n) - Acl, net.B @ synth.M @ G)
    Tu = synth.L @ Tx + synth.M @ G
    return Tx, Tu


def expected_tracking_cost(net: NetworkModel, synth: SynthesisResult, reference=None) -> Dict[str, float]:
    """Expected long-run average cost measured against the true reference.

    The expectation is over process noise, privacy noise on the outputs and
    the one-off release of the reference limit.  The estimation part is the
    same as in :func:`total_private_cost`; the reference part is computed by
    pushing ``x_tilde = x_bar + wbar`` through the steady-state maps.
    """
    xb = net.x_bar if reference is None else np.asarray(reference, dtype=float)
    Tx, Tu = steady_state_maps(net, synth)
    dx = Tx @ xb - xb
    du = Tu @ xb
    parts = {
        "estimation": estimation_cost(net.Q, synth.K, synth.Sigma, synth.Sigma_bar),
        "tracking": float(dx @ net.Q @ dx + du @ net.R @ du),
        "reference_state_penalty": float(np.trace(Tx.T @ net.Q @ Tx @ net.Wbar)),
        "reference_input_penalty": float(np.trace(Tu.T @ net.R @ Tu @ net.Wbar)),
    }
    parts["total"] = sum(parts.values())
    return parts


@dataclass
class RateBounds:
    lower: float
    upper: float
    sigma: float
    dsigma: float
    P: np.ndarray
    U: np.ndarray
    F: np.ndarray
    P_bar: np.ndarray
    F_bar: np.ndarray
    U_bar: np.ndarray
    corrected: bool = False

    def contains(self, value: float, rtol: float = 0.0) -> bool:
        lo = self.lower - rtol * abs(self.lower)
        hi = self.upper + rtol * abs(self.upper)
        return lo <= value <= hi


def tied_network(net: NetworkModel, epsilon: float, delta: float, sensitivity: float = 1.0) -> NetworkModel:
    """``net`` with every output and reference noise scale set to the same
    sigma = noise_scale((epsilon, delta), sensitivity)."""
    s = noise_scale(PrivacyParams(epsilon, delta), sensitivity)
    return net.with_noise(s, s)


def _scaled_interval_lo(lam_min: float, lo: float, hi: float) -> float:
    # min of lam * t over t in [lo, hi], t >= 0, hi possibly infinite
    if lam_min >= 0:
        return lam_min * lo
    return -math.inf if math.isinf(hi) else lam_min * hi


def _scaled_interval_hi(lam_max: float, lo: float, hi: float) -> float:
    if lam_max <= 0:
        return lam_max * lo
    return math.inf if math.isinf(hi) else lam_max * hi


def cost_rate_bounds(epsilon: float, delta: float, sensitivity: float, net: NetworkModel,
                     synth: Optional[SynthesisResult] = None, corrected: bool = False) -> RateBounds:
    """Bounds on d(overhead)/d(epsilon) when every agent uses the same
    (epsilon, delta) for outputs and reference.

    With ``corrected=False`` the bounds are assembled in their standard form.
    ``corrected=True`` uses the interval tr(dSigma/dsigma) in
    [c / lambda_min(U), c / lambda_max(U)] (c = -2 sigma tr(F'F) < 0), which is
    the ordering implied by lambda_min(U) tr X <= tr(UX) <= lambda_max(U) tr X,
    and combines intervals by sign-aware products; it returns an infinite
    bound when lambda_max(U) >= 0.
    """
    if spectral_radius(net.A) >= 1.0:
        raise PreconditionError("cost-rate bounds need a strictly stable A")
    tnet = tied_network(net, epsilon, delta, sensitivity)
    gains = None if synth is None else (synth.K, synth.L, synth.M)
    syn = synthesize(tnet, gains=gains)
    sigma = float(tnet.sigmas[0])
    A, C, V, Sig = tnet.A, tnet.C, tnet.V, syn.Sigma
    n = tnet.n
    I = np.eye(n)
    innov = C @ Sig @ C.T + V
    F_bar = np.linalg.solve(innov, C @ Sig)
    F = F_bar @ A.T
    P = C.T @ F
    P_bar = C.T @ F_bar
    U = symmetrize((A.T - P) @ (A - P.T) - I)
    U_bar = symmetrize((I - P_bar) @ (I - P_bar.T))
    c = -2.0 * sigma * float(np.trace(F.T @ F))
    fb = 2.0 * sigma * float(np.trace(F_bar.T @ F_bar))
    H = tracking_gain_H(A, tnet.B, syn.L, syn.M)
    ref = 2.0 * sigma * float(np.trace(tnet.Q)) + 2.0 * sigma * float(np.trace(H.T @ tnet.R @ H))
    QK = symmetrize(tnet.Q - syn.K)
    kmin, kmax = lambda_min(syn.K), lambda_max(syn.K)
    qkmin, qkmax = lambda_min(QK), lambda_max(QK)
    umin, umax = lambda_min(U), lambda_max(U)
    ubmin, ubmax = lambda_min(U_bar), lambda_max(U_bar)
    ds = dsigma_depsilon(epsilon, delta, sensitivity)

    if not corrected:
        clip = max(c / umax, 0.0) if umax != 0 else 0.0
        per_sigma_hi = kmax * c / umin + qkmax * (clip * ubmin + fb) + ref
        per_sigma_lo = kmin * clip + qkmin * (c / umin * ubmax + fb) + ref
        lower, upper = ds * per_sigma_hi, ds * per_sigma_lo
    else:
        tx_lo = c / umin if umin < 0 else 0.0
        tx_hi = c / umax if umax < 0 else math.inf
        ty_lo = ubmin * tx_lo + fb
        ty_hi = math.inf if math.isinf(tx_hi) and ubmax > 0 else ubmax * tx_hi + fb
        lo_s = _scaled_interval_lo(kmin, tx_lo, tx_hi) + _scaled_interval_lo(qkmin, ty_lo, ty_hi) + ref
        hi_s = _scaled_interval_hi(kmax, tx_lo, tx_hi) + _scaled_interval_hi(qkmax, ty_lo, ty_hi) + ref
        lower, upper = ds * hi_s, ds * lo_s
    return RateBounds(lower=float(lower), upper=float(upper), sigma=sigma, dsigma=ds, P=P, U=U, F=F,
                      P_bar=P_bar, F_bar=F_bar, U_bar=U_bar, corrected=corrected)


def five_point_stencil(f: Callable[[float], float], x: float, h: float) -> float:
    """Fourth-order central difference of f at x."""
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12.0 * h)


def overhead_at(epsilon: float, delta: float, net: NetworkModel, sensitivity: float = 1.0, gains=None) -> float:
    tnet = tied_network(net, epsilon, delta, sensitivity)
    return privacy_overhead(tnet, synthesize(tnet, gains=gains))


def cost_rate_numeric(epsilon: float, delta: float, net: NetworkModel, h: Optional[float] = None,
                      sensitivity: float = 1.0, gains=None) -> float:
    """Five-point-stencil estimate of d(overhead)/d(epsilon); h defaults to 1e-3*epsilon."""
    h = 1e-3 * epsilon if h is None else h
    if not (h > 0 and epsilon - 2 * h > 0):
        raise DomainError("epsilon is too small for the stencil step")
    gains = synthesize_gains(net) if gains is None else gains
    return five_point_stencil(lambda e: overhead_at(e, delta, net, sensitivity, gains), epsilon, h)
