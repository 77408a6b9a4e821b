"""Leakage bounds on the steady-state Kalman error covariances.

All bounds assume a diagonal, positive output matrix C and diagonal output
noise V = diag(sigma_i^2).  Two extremal channels enter: ``l`` with the
smallest signal-to-noise ratio C_ii^2 / sigma_i^2 and ``u`` with the largest.
Traces are mean-squared errors; log-determinants are (up to constants) the
differential entropies of the error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import DimensionError, DomainError, InfeasibleError
from .matrix import as_matrix, lambda_min, logdet, require_pd
from .synthesis import NetworkModel, SynthesisResult, filter_covariances, solve_reference_offset

Pair = Tuple[float, float]


@dataclass(frozen=True)
class ExtremalChannel:
    c_l: float
    sigma_l: float
    c_u: float
    sigma_u: float
    index_l: int = 0
    index_u: int = 0

    @property
    def snr_l(self) -> float:
        return self.c_l ** 2 / self.sigma_l ** 2

    @property
    def snr_u(self) -> float:
        return self.c_u ** 2 / self.sigma_u ** 2


def _diagonal(m, name: str) -> np.ndarray:
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square and diagonal for the leakage bounds")
    d = np.diag(a)
    if np.any(a - np.diag(d)):
        raise DimensionError(f"{name} must be diagonal for the leakage bounds")
    if np.any(d <= 0):
        raise DomainError(f"{name} must have a strictly positive diagonal")
    return d


def extremal_channel(C, V) -> ExtremalChannel:
    """Pick the weakest and strongest output channels (ties go to the lowest index)."""
    c = _diagonal(C, "C")
    v = _diagonal(V, "V")
    if c.shape != v.shape:
        raise DimensionError("C and V must have the same size")
    snr = c ** 2 / v
    lo, hi = int(np.argmin(snr)), int(np.argmax(snr))
    sig = np.sqrt(v)
    return ExtremalChannel(c_l=float(c[lo]), sigma_l=float(sig[lo]), c_u=float(c[hi]),
                           sigma_u=float(sig[hi]), index_l=lo, index_u=hi)


def _frob2(A) -> float:
    A = as_matrix(A, "A")
    return float(np.sum(A * A))


def apriori_trace_bounds(A, W, ch: ExtremalChannel) -> Pair:
    """(lower, upper) on tr Sigma, the a priori (prediction) MSE."""
    W = require_pd(W, "W")
    lam = lambda_min(W)
    trw, taa = float(np.trace(W)), _frob2(A)
    su2 = ch.sigma_u ** 2
    lower = trw + su2 * taa * lam / (su2 + lam * ch.c_u ** 2)
    upper = trw + ch.sigma_l ** 2 * taa / ch.c_l ** 2
    return lower, upper


def aposteriori_trace_bounds(n: int, W, ch: ExtremalChannel) -> Pair:
    """(lower, upper) on tr Sigma_bar, the a posteriori (estimation) MSE."""
    lam = lambda_min(require_pd(W, "W"))
    su2 = ch.sigma_u ** 2
    lower = n * su2 / (ch.c_u ** 2 + su2 / lam)
    upper = n * ch.sigma_l ** 2 / ch.c_l ** 2
    return lower, upper


def apriori_logdet_bounds(A, W, C, V, ch: ExtremalChannel, paper_literal: bool = False) -> Pair:
    """(lower, upper) on ln det Sigma.

    The lower bound combines det(A)^2 with an arithmetic-mean bound on the
    information matrix W^-1 + C'V^-1C.  Its channel sum uses C_ii^2/sigma_i^2;
    ``paper_literal=True`` switches to C_ii^2/sigma_i for comparison.  The
    lower bound is evaluated in log space so tiny or huge determinants do not
    overflow.
    """
    A = as_matrix(A, "A")
    W = require_pd(W, "W")
    n = A.shape[0]
    c = _diagonal(C, "C")
    v = _diagonal(V, "V")
    upper = _frob2(A) * ch.sigma_l ** 2 / ch.c_l ** 2 + float(np.trace(W))
    noise = np.sqrt(v) if paper_literal else v
    info = float(np.trace(np.linalg.inv(W))) + float(np.sum(c ** 2 / noise))
    sign, logabs = np.linalg.slogdet(A)
    first = -math.inf if sign == 0 else 2.0 * logabs - n * math.log(info / n)
    lower = float(np.logaddexp(first, logdet(W)))
    return lower, upper


def aposteriori_logdet_bounds(n: int, W, ch: ExtremalChannel) -> Pair:
    """(lower, upper) on ln det Sigma_bar."""
    lam = lambda_min(require_pd(W, "W"))
    su2 = ch.sigma_u ** 2
    lower = n * math.log(su2 / (ch.c_u ** 2 + su2 / lam))
    upper = n * math.log(ch.sigma_l ** 2 / ch.c_l ** 2)
    return lower, upper


@dataclass
class BoundReport:
    trace_sigma: Pair
    trace_sigma_bar: Pair
    logdet_sigma: Pair
    logdet_sigma_bar: Pair
    channel: ExtremalChannel
    exact: Dict[str, float] = field(default_factory=dict)

    def pairs(self) -> Dict[str, Pair]:
        return {
            "trace_sigma": self.trace_sigma,
            "trace_sigma_bar": self.trace_sigma_bar,
            "logdet_sigma": self.logdet_sigma,
            "logdet_sigma_bar": self.logdet_sigma_bar,
        }

    def violations(self, slack: float = 1e-8):
        """Names of quantities whose exact value falls outside its bounds.

        The slack is relative: ``slack * max(1, |bound|)``.
        """
        bad = []
        for key, (lo, hi) in self.pairs().items():
            if key not in self.exact:
                continue
            x = self.exact[key]
            if x < lo - slack * max(1.0, abs(lo)) or x > hi + slack * max(1.0, abs(hi)):
                bad.append(key)
        return bad

    def to_dict(self) -> dict:
        out = {k: list(v) for k, v in self.pairs().items()}
        out["channel"] = asdict(self.channel)
        out["exact"] = dict(self.exact)
        return out


def bound_report(net: NetworkModel, paper_literal: bool = False, exact: bool = True,
                 covariances: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> BoundReport:
    """All four bound pairs for ``net`` together with the exact values."""
    ch = extremal_channel(net.C, net.V)
    rep = BoundReport(
        trace_sigma=apriori_trace_bounds(net.A, net.W, ch),
        trace_sigma_bar=aposteriori_trace_bounds(net.n, net.W, ch),
        logdet_sigma=apriori_logdet_bounds(net.A, net.W, net.C, net.V, ch, paper_literal),
        logdet_sigma_bar=aposteriori_logdet_bounds(net.n, net.W, ch),
        channel=ch,
    )
    if exact:
        Sigma, Sigma_bar = covariances if covariances is not None else filter_covariances(net)
        rep.exact = {
            "trace_sigma": float(np.trace(Sigma)),
            "trace_sigma_bar": float(np.trace(Sigma_bar)),
            "logdet_sigma": logdet(Sigma),
            "logdet_sigma_bar": logdet(Sigma_bar),
        }
    return rep


def error_budget_from_cost(alpha: float, net: NetworkModel, synth: SynthesisResult, reference=None) -> float:
    """Largest prediction MSE tr(Sigma) compatible with an average-cost cap alpha.

    ``reference`` defaults to the released limit ``x_tilde``; the offset g is
    recomputed when a different reference is supplied.
    """
    from .cost import offset_credit, reference_privacy_cost, tracking_gain_H

    r = net.x_tilde if reference is None else np.asarray(reference, dtype=float)
    g = synth.g if reference is None else solve_reference_offset(net, synth.K, r)
    H = tracking_gain_H(net.A, net.B, synth.L, synth.M)
    slack = (alpha - float(r @ net.Q @ r) + offset_credit(net, synth.K, g)
             - reference_privacy_cost(net.Q, net.R, H, net.Wbar))
    if not slack > 0:
        raise InfeasibleError(f"cost cap {alpha:g} does not exceed the irreducible cost terms")
    return slack / lambda_min(net.Q)
