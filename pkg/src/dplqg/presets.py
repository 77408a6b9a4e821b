"""Named reproducible experiments built on the library.

* ``case-study``: 100 double-integrator vehicles with coupled cost; running
  average cost of the private and non-private loops and agent 0's traces.
* ``table1``: estimation MSE of one vehicle with its a posteriori trace
  bounds at delta = 0.05 over a grid of epsilons.
* ``cost-rate-sweep``: derivative of the privacy overhead with respect to
  epsilon (five-point stencil) against its analytic bounds for a damped
  vehicle model at delta = 0.001.
* ``mse-bounds``: per-step squared prediction error of the case-study cloud
  against the per-vehicle a priori trace bounds.
"""

from __future__ import annotations

import json
import logging
import math
from importlib import resources
from typing import Callable, Dict, Optional

import numpy as np

from .bounds import apriori_trace_bounds, aposteriori_trace_bounds, bound_report, extremal_channel
from .cost import cost_rate_bounds, cost_rate_numeric, expected_tracking_cost, total_private_cost
from .errors import DomainError
from .io import ResultBundle, scenario_from_dict
from .mechanisms import PrivacyParams, noise_scale
from .sim import Scenario, empirical_mse, run_simulation
from .synthesis import NetworkModel, filter_covariances, synthesize, synthesize_gains

logger = logging.getLogger(__name__)

SAMPLING_PERIOD = 0.1
TABLE1_EPSILONS = (0.1, 0.2, 0.4, 0.6, 0.8, 1.0)
TABLE1_DELTA = 0.05
RATE_DELTA = 0.001
BURN_IN = 10


def vehicle_matrices(ts: float = SAMPLING_PERIOD, damping: float = 1.0):
    """Discretized double integrator (position, velocity), optionally scaled by ``damping``."""
    A = damping * np.array([[1.0, ts], [0.0, 1.0]])
    B = np.array([[ts * ts / 2.0], [ts]])
    return A, B


def case_study_document() -> dict:
    text = resources.files("dplqg").joinpath("data/case_study.json").read_text(encoding="utf-8")
    return json.loads(text)


def case_study_scenario(seed: Optional[int] = None, agents: Optional[int] = None,
                        steps: Optional[int] = None) -> Scenario:
    doc = case_study_document()
    if agents is not None:
        doc["agents"]["count"] = int(agents)
    if steps is not None:
        doc["sim"]["steps"] = int(steps)
    return scenario_from_dict(doc, seed=seed)


def run_case_study(seed: Optional[int] = None) -> ResultBundle:
    sc = case_study_scenario(seed)
    net = sc.network()
    syn = synthesize(net)
    private = run_simulation(sc, net=net, synth=syn)
    plain = run_simulation(sc, private=False)
    bundle = ResultBundle(name="case-study", seed=sc.seed, scenario=sc)
    bundle.add_table("average_cost", ["private", "nonprivate"],
                     np.column_stack([private.running_cost, plain.running_cost]))
    b = net.blocks[0].state
    o = net.blocks[0].output
    bundle.add_table("agent0", ["x1", "x2", "y1", "y2", "xhat1", "xhat2", "ref1", "ref2"],
                     np.column_stack([private.x[:, b], private.y_tilde[:, o], private.x_hat[:, b],
                                      private.reference[:, b]]))
    report = total_private_cost(net, syn)
    bundle.reports["cost"] = report.to_dict()
    bundle.reports["expected_cost"] = expected_tracking_cost(net, syn)
    bundle.reports["synthesis"] = {
        "trace_K": float(np.trace(syn.K)),
        "trace_sigma": float(np.trace(syn.Sigma)),
        "trace_sigma_bar": float(np.trace(syn.Sigma_bar)),
        "sigma": float(net.sigmas[0]),
        "sigma_bar": float(net.sigma_bars[0]),
        "gain_fingerprint": private.gain_fingerprint,
    }
    bundle.reports["final_state_agent0"] = private.x[-1, b]
    return bundle


def single_vehicle(sigma: float, damping: float = 1.0, Q=None, R=None) -> NetworkModel:
    A, B = vehicle_matrices(damping=damping)
    Q = np.eye(2) if Q is None else Q
    R = np.eye(1) if R is None else R
    return NetworkModel.from_matrices(A, B, np.eye(2), np.eye(2), sigma * sigma * np.eye(2), Q, R)


def run_table1(seed: Optional[int] = None) -> ResultBundle:
    rows = []
    for eps in TABLE1_EPSILONS:
        sigma = noise_scale(PrivacyParams(eps, TABLE1_DELTA), 1.0)
        net = single_vehicle(sigma)
        Sigma, Sigma_bar = filter_covariances(net)
        ch = extremal_channel(net.C, net.V)
        lb, ub = aposteriori_trace_bounds(net.n, net.W, ch)
        plb, pub = apriori_trace_bounds(net.A, net.W, ch)
        rows.append([eps, sigma, np.trace(Sigma_bar), ub, lb, np.trace(Sigma), plb, pub])
    bundle = ResultBundle(name="table1", seed=0 if seed is None else int(seed))
    cols = ["epsilon", "sigma", "trace_sigma_bar", "upper", "lower", "trace_sigma",
            "prior_lower", "prior_upper"]
    bundle.add_table("table1", cols, rows)
    return bundle


def rate_system() -> NetworkModel:
    """Stable vehicle (A scaled by 0.9) with the case-study cost weights."""
    return single_vehicle(1.0, damping=0.9, Q=500.0 * np.eye(2), R=0.1 * np.eye(1))


def run_cost_rate_sweep(seed: Optional[int] = None, points: int = 20) -> ResultBundle:
    net = rate_system()
    gains = synthesize_gains(net)
    rows = []
    for eps in np.linspace(0.2, 3.0, points):
        rb = cost_rate_bounds(eps, RATE_DELTA, 1.0, net)
        rc = cost_rate_bounds(eps, RATE_DELTA, 1.0, net, corrected=True)
        num = cost_rate_numeric(eps, RATE_DELTA, net, gains=gains)
        rows.append([eps, rb.lower, num, rb.upper, rc.lower, rc.upper])
    bundle = ResultBundle(name="cost-rate-sweep", seed=0 if seed is None else int(seed))
    bundle.add_table("cost_rate", ["epsilon", "lower", "stencil", "upper", "corrected_lower",
                                   "corrected_upper"], rows)
    return bundle


def run_mse_bounds(seed: Optional[int] = None) -> ResultBundle:
    sc = case_study_scenario(seed)
    net = sc.network()
    syn = synthesize(net)
    trace = run_simulation(sc, net=net, synth=syn)
    pred, est = empirical_mse([trace])
    count = len(sc.agents)
    per_agent = pred / count
    b = net.blocks[0]
    sub = NetworkModel.from_matrices(net.A[b.state, b.state], net.B[b.state, b.input], net.C[b.output, b.state],
                                     net.W[b.state, b.state], net.V[b.output, b.output],
                                     np.eye(b.state.stop - b.state.start), np.eye(b.input.stop - b.input.start))
    lo, hi = apriori_trace_bounds(sub.A, sub.W, extremal_channel(sub.C, sub.V))
    running = np.cumsum(per_agent) / np.arange(1, per_agent.size + 1)
    bundle = ResultBundle(name="mse-bounds", seed=sc.seed, scenario=sc)
    bundle.add_table("prediction_mse", ["squared_error", "running_mean", "lower", "upper", "estimation_error"],
                     np.column_stack([per_agent, running, np.full_like(pred, lo), np.full_like(pred, hi),
                                      est / count]))
    bundle.reports["bounds_agent0"] = bound_report(sub).to_dict()
    return bundle


PRESETS: Dict[str, Callable[..., ResultBundle]] = {
    "case-study": run_case_study,
    "table1": run_table1,
    "cost-rate-sweep": run_cost_rate_sweep,
    "mse-bounds": run_mse_bounds,
}


def run_preset(name: str, seed: Optional[int] = None) -> ResultBundle:
    if name not in PRESETS:
        raise DomainError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return PRESETS[name](seed)
