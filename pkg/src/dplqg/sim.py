"""Closed-loop simulation of the private cloud controller.

Per time step k the loop is:

1. every agent (ascending index) draws its output noise v_i(k) and releases
   y_i(k) = C_i x_i(k) + v_i(k);
2. the cloud predicts (x_prior(0) is the public initial mean) and corrects
   with the released outputs;
3. the cloud applies u(k) = L x_hat(k) + M g;
4. every agent (ascending index) draws w_i(k) and steps its state.

All randomness comes from per-(run, agent, role) substreams of one master
seed, so a run is bit-reproducible and agents do not perturb each other.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DomainError
from .matrix import require_pd
from .mechanisms import substream
from .synthesis import (
    AgentModel,
    NetworkModel,
    SynthesisResult,
    assemble_network,
    control_input,
    correct,
    synthesize,
)

logger = logging.getLogger(__name__)

PROFILES = ("tanh", "constant")


@dataclass
class Scenario:
    agents: List[AgentModel]
    Q: np.ndarray
    R: np.ndarray
    steps: int = 100
    seed: int = 0
    runs: int = 1
    reference_profile: str = "tanh"
    initial_spread: float = 1.0
    name: str = "scenario"

    def __post_init__(self):
        if not self.agents:
            raise DomainError("scenario has no agents")
        if self.steps < 1 or self.runs < 1:
            raise DomainError("steps and runs must be at least 1")
        if self.reference_profile not in PROFILES:
            raise DomainError(f"unknown reference profile {self.reference_profile!r}")
        if self.initial_spread < 0:
            raise DomainError("initial_spread must be non-negative")
        self.Q = require_pd(self.Q, "Q")
        self.R = require_pd(self.R, "R")

    def network(self, run: int = 0, privatize_reference: bool = True) -> NetworkModel:
        return assemble_network(self.agents, self.Q, self.R, seed=self.seed, run=run,
                                privatize_reference=privatize_reference)

    def reference(self, k: int) -> np.ndarray:
        limit = np.concatenate([a.reference_limit for a in self.agents])
        if self.reference_profile == "constant":
            return limit
        return np.tanh(k) * limit


class NoiseSource:
    """Standard normal draws keyed by (agent, role) for one run."""

    def __init__(self, seed: int, run: int = 0):
        self.seed, self.run = seed, run
        self._streams = {}

    def normal(self, agent: int, role: str, size: int) -> np.ndarray:
        key = (agent, role)
        if key not in self._streams:
            self._streams[key] = substream(self.seed, agent, role, self.run)
        return self._streams[key].standard_normal(size)


@dataclass
class SimTrace:
    x: np.ndarray
    x_hat: np.ndarray
    x_prior: np.ndarray
    y_tilde: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    reference: np.ndarray
    cost: np.ndarray
    running_cost: np.ndarray
    x_tilde: np.ndarray
    gain_fingerprint: str
    run: int = 0
    private: bool = True
    blocks: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.cost.shape[0]

    def final_average(self) -> float:
        return float(self.running_cost[-1])


def gain_fingerprint(synth: SynthesisResult) -> str:
    h = hashlib.sha256()
    for m in (synth.K, synth.L, synth.M):
        h.update(np.ascontiguousarray(m, dtype=float).tobytes())
    return h.hexdigest()


def run_simulation(sc: Scenario, run: int = 0, private: bool = True, process_noise: bool = True,
                   noise: Optional[NoiseSource] = None, net: Optional[NetworkModel] = None,
                   synth: Optional[SynthesisResult] = None) -> SimTrace:
    """Simulate one run of the private (or non-private) closed loop.

    ``private=False`` removes both privacy mechanisms: no output noise is
    drawn, the cloud uses the true reference limit, and the filter is
    synthesized with a vanishing output covariance.  ``process_noise=False``
    also removes w(k) and the initial-state spread.
    """
    if net is None:
        net = sc.network(run=run, privatize_reference=private)
        if not private:
            net = net.without_privacy()
    if synth is None:
        synth = synthesize(net)
    noise = NoiseSource(sc.seed, run) if noise is None else noise
    agents = sc.agents
    blocks = net.blocks
    n, m, p = net.n, net.m, net.C.shape[0]
    T = sc.steps
    chol_w = [np.linalg.cholesky(a.W) for a in agents]

    x = np.empty(n)
    for i, (ag, b) in enumerate(zip(agents, blocks)):
        if ag.initial_state is not None:
            x[b.state] = ag.initial_state
        elif process_noise and sc.initial_spread > 0:
            x[b.state] = ag.initial_mean + sc.initial_spread * noise.normal(i, "initial", ag.n)
        else:
            x[b.state] = ag.initial_mean
    x_prior = np.concatenate([a.initial_mean for a in agents])

    out = {k: np.zeros((T, d)) for k, d in
           (("x", n), ("x_hat", n), ("x_prior", n), ("y", p), ("u", m), ("v", p), ("w", n), ("ref", n))}
    cost = np.zeros(T)
    sig = net.sigmas if net.sigmas is not None else np.zeros(len(blocks))
    Mg = synth.M @ synth.g
    for k in range(T):
        v = np.zeros(p)
        if private:
            for i, (ag, b) in enumerate(zip(agents, blocks)):
                v[b.output] = sig[i] * noise.normal(i, "output", ag.p)
        y = net.C @ x + v
        if k > 0:
            x_prior = net.A @ out["x_hat"][k - 1] + net.B @ out["u"][k - 1]
        state = correct(x_prior, synth, net, y)
        u = synth.L @ state.x_hat + Mg
        ref = sc.reference(k)
        e = x - ref
        cost[k] = e @ net.Q @ e + u @ net.R @ u
        w = np.zeros(n)
        if process_noise:
            for i, (ag, b) in enumerate(zip(agents, blocks)):
                w[b.state] = chol_w[i] @ noise.normal(i, "process", ag.n)
        for key, val in (("x", x), ("x_hat", state.x_hat), ("x_prior", state.x_prior), ("y", y),
                         ("u", u), ("v", v), ("w", w), ("ref", ref)):
            out[key][k] = val
        x = net.A @ x + net.B @ u + w
    running = np.cumsum(cost) / np.arange(1, T + 1)
    return SimTrace(x=out["x"], x_hat=out["x_hat"], x_prior=out["x_prior"], y_tilde=out["y"], u=out["u"],
                    v=out["v"], w=out["w"], reference=out["ref"], cost=cost, running_cost=running,
                    x_tilde=net.x_tilde.copy(), gain_fingerprint=gain_fingerprint(synth), run=run,
                    private=private, blocks=list(blocks))


def run_monte_carlo(sc: Scenario, private: bool = True, process_noise: bool = True) -> List[SimTrace]:
    """One trace per run index 0..runs-1; each run redraws the released reference."""
    return [run_simulation(sc, run=r, private=private, process_noise=process_noise) for r in range(sc.runs)]


def empirical_cost(trace: SimTrace, net: NetworkModel) -> np.ndarray:
    """Running time average of (x - x_ref)'Q(x - x_ref) + u'Ru along a trace."""
    e = trace.x - trace.reference
    inst = np.einsum("ki,ij,kj->k", e, net.Q, e) + np.einsum("ki,ij,kj->k", trace.u, net.R, trace.u)
    return np.cumsum(inst) / np.arange(1, inst.shape[0] + 1)


def empirical_mse(traces: List[SimTrace]):
    """Per-step squared prediction and estimation errors averaged over runs."""
    if not traces:
        raise DomainError("need at least one trace")
    pred = np.mean([np.sum((t.x - t.x_prior) ** 2, axis=1) for t in traces], axis=0)
    est = np.mean([np.sum((t.x - t.x_hat) ** 2, axis=1) for t in traces], axis=0)
    return pred, est
