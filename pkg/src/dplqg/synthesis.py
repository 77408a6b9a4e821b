"""Network assembly and controller/filter synthesis.

The cloud controller is certainty equivalent: feedback gains depend only on
(A, B, Q, R), while the privacy noise enters through the steady-state Kalman
filter covariances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .errors import ControllabilityError, DimensionError, SingularMatrixError
from .matrix import (
    as_matrix,
    block_diag,
    require_pd,
    solve_control_dare,
    solve_filter_dare,
    solve_linear,
    spectral_radius,
    symmetrize,
)
from .mechanisms import (
    AdjacencyParams,
    PrivacyParams,
    noise_scale,
    output_sensitivity,
    privatize_static,
    substream,
)

logger = logging.getLogger(__name__)

NONPRIVATE_TAU = 1e-12


@dataclass
class AgentModel:
    """One agent's public model, privacy choices and private data.

    ``initial_state`` is the agent's true x(0); it never leaves the agent.  When
    it is None the simulator draws it around ``initial_mean``.
    ``static_sensitivity`` overrides the reference-query sensitivity, which
    otherwise equals the static adjacency radius.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    W: np.ndarray
    privacy: PrivacyParams
    reference_privacy: PrivacyParams
    reference_limit: np.ndarray
    adjacency: AdjacencyParams = field(default_factory=AdjacencyParams)
    initial_mean: Optional[np.ndarray] = None
    initial_state: Optional[np.ndarray] = None
    static_sensitivity: Optional[float] = None

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError("A must be square")
        self.B = as_matrix(self.B, "B")
        self.C = as_matrix(self.C, "C")
        self.W = require_pd(self.W, "W")
        if self.B.shape[0] != n or self.C.shape[1] != n or self.W.shape != (n, n):
            raise DimensionError("agent matrices have inconsistent sizes")
        self.reference_limit = _vector(self.reference_limit, n, "reference_limit")
        self.initial_mean = np.zeros(n) if self.initial_mean is None else _vector(self.initial_mean, n, "initial_mean")
        if self.initial_state is not None:
            self.initial_state = _vector(self.initial_state, n, "initial_state")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def output_noise_scale(self) -> float:
        return noise_scale(self.privacy, output_sensitivity(self.C, self.adjacency.trajectory_radius))

    def reference_noise_scale(self) -> float:
        sens = self.adjacency.static_radius if self.static_sensitivity is None else self.static_sensitivity
        return noise_scale(self.reference_privacy, sens)


def _vector(v, n: int, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise DimensionError(f"{name} must have length {n}, got {a.size}")
    return a


@dataclass(frozen=True)
class Block:
    """Index ranges of one agent inside the aggregate state, input and output."""

    state: slice
    input: slice
    output: slice


@dataclass
class NetworkModel:
    """Block-diagonal aggregate of all agents plus the shared cost.

    ``V`` and ``Wbar`` are the output and reference privacy-noise covariances;
    ``x_tilde`` is the privatized reference limit the cloud works with and
    ``x_bar`` the true limit (kept for simulation and oracle studies only).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray
    Wbar: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x_tilde: np.ndarray
    x_bar: np.ndarray
    blocks: List[Block] = field(default_factory=list)
    sigmas: Optional[np.ndarray] = None
    sigma_bars: Optional[np.ndarray] = None

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        n = self.A.shape[0]
        self.B = as_matrix(self.B, "B")
        self.C = as_matrix(self.C, "C")
        self.W = require_pd(self.W, "W")
        self.V = as_matrix(self.V, "V")
        self.Wbar = as_matrix(self.Wbar, "Wbar")
        self.Q = require_pd(self.Q, "Q")
        self.R = require_pd(self.R, "R")
        m, p = self.B.shape[1], self.C.shape[0]
        if (self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape[1] != n
                or self.W.shape != (n, n) or self.V.shape != (p, p) or self.Wbar.shape != (n, n)
                or self.Q.shape != (n, n) or self.R.shape != (m, m)):
            raise DimensionError("network matrices have inconsistent sizes")
        self.x_tilde = _vector(self.x_tilde, n, "x_tilde")
        self.x_bar = _vector(self.x_bar, n, "x_bar")
        if not self.blocks:
            self.blocks = [Block(slice(0, n), slice(0, m), slice(0, p))]

    @classmethod
    def from_matrices(cls, A, B, C, W, V, Q, R, Wbar=None, x_tilde=None, x_bar=None) -> "NetworkModel":
        """Single-block network built straight from matrices (no sampling)."""
        A = as_matrix(A, "A")
        n = A.shape[0]
        x_tilde = np.zeros(n) if x_tilde is None else x_tilde
        return cls(A=A, B=B, C=C, W=W, V=V, Wbar=np.zeros((n, n)) if Wbar is None else Wbar,
                   Q=Q, R=R, x_tilde=x_tilde, x_bar=x_tilde if x_bar is None else x_bar)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def with_noise(self, sigmas, sigma_bars=None) -> "NetworkModel":
        """Copy with per-agent output (and optionally reference) noise scales
        replaced.  The released reference ``x_tilde`` is left as is."""
        sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (len(self.blocks),)).copy()
        V = block_diag(*[s * s * np.eye(b.output.stop - b.output.start) for s, b in zip(sigmas, self.blocks)])
        out = replace(self, V=V, sigmas=sigmas)
        if sigma_bars is not None:
            sb = np.broadcast_to(np.asarray(sigma_bars, dtype=float), (len(self.blocks),)).copy()
            out = replace(out, sigma_bars=sb, Wbar=block_diag(
                *[s * s * np.eye(b.state.stop - b.state.start) for s, b in zip(sb, self.blocks)]))
        return out

    def without_privacy(self, tau: float = NONPRIVATE_TAU) -> "NetworkModel":
        """The same network with (numerically) no privacy noise: V = tau*I,
        Wbar = 0 and the cloud holding the true reference limit."""
        p = self.C.shape[0]
        return replace(self, V=tau * np.eye(p), Wbar=np.zeros_like(self.Wbar), x_tilde=self.x_bar.copy(),
                       sigmas=np.full(len(self.blocks), np.sqrt(tau)), sigma_bars=np.zeros(len(self.blocks)))

    def with_reference(self, x_tilde) -> "NetworkModel":
        return replace(self, x_tilde=_vector(x_tilde, self.n, "x_tilde"))


def assemble_network(agents: Sequence[AgentModel], Q, R, seed: int = 0, run: int = 0,
                     privatize_reference: bool = True) -> NetworkModel:
    """Stack agents into a block-diagonal network and release the reference.

    Each agent's output noise scale comes from its trajectory privacy and the
    output sensitivity s1(C_i) b_i; the reference limit is released once through
    the static Gaussian mechanism using that agent's ``reference`` substream.
    """
    if not agents:
        raise DimensionError("a network needs at least one agent")
    blocks, xs, xt, sig, sigb = [], [], [], [], []
    i0 = j0 = k0 = 0
    for idx, ag in enumerate(agents):
        blocks.append(Block(slice(i0, i0 + ag.n), slice(j0, j0 + ag.m), slice(k0, k0 + ag.p)))
        i0, j0, k0 = i0 + ag.n, j0 + ag.m, k0 + ag.p
        s, sb = ag.output_noise_scale(), ag.reference_noise_scale()
        sig.append(s)
        sigb.append(sb)
        xs.append(ag.reference_limit)
        if privatize_reference:
            xt.append(privatize_static(ag.reference_limit, sb, substream(seed, idx, "reference", run)))
        else:
            xt.append(ag.reference_limit.copy())
    net = NetworkModel(
        A=block_diag(*[a.A for a in agents]),
        B=block_diag(*[a.B for a in agents]),
        C=block_diag(*[a.C for a in agents]),
        W=block_diag(*[a.W for a in agents]),
        V=block_diag(*[s * s * np.eye(a.p) for s, a in zip(sig, agents)]),
        Wbar=block_diag(*[s * s * np.eye(a.n) for s, a in zip(sigb, agents)]),
        Q=Q, R=R,
        x_tilde=np.concatenate(xt), x_bar=np.concatenate(xs),
        blocks=blocks, sigmas=np.array(sig), sigma_bars=np.array(sigb),
    )
    logger.debug("assembled network: %d agents, n=%d, m=%d", len(agents), net.n, net.m)
    return net


@dataclass
class SynthesisResult:
    K: np.ndarray
    L: np.ndarray
    M: np.ndarray
    g: np.ndarray
    Sigma: np.ndarray
    Sigma_bar: np.ndarray
    kalman_gain: np.ndarray


@dataclass
class FilterState:
    x_hat: np.ndarray
    x_prior: np.ndarray


def controllable(A, B, rtol: float = 1e-10) -> bool:
    """Rank test on [B, AB, ..., A^{n-1}B] with threshold rtol * s1."""
    A, B = as_matrix(A), as_matrix(B)
    n = A.shape[0]
    cols, blk = [], B
    for _ in range(n):
        cols.append(blk)
        blk = A @ blk
    s = np.linalg.svd(np.hstack(cols), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return False
    return int(np.sum(s > rtol * s[0])) == n


def gain_matrices(A, B, R, K):
    """L and M for a given control Riccati solution K."""
    gram = R + B.T @ K @ B
    L = -solve_linear(gram, B.T @ K @ A)
    M = -solve_linear(gram, B.T)
    return L, M


def synthesize_gains(net: NetworkModel):
    """Solve the control Riccati equation and return (K, L, M).

    Controllability is checked block by block, which for a block-diagonal
    pair is equivalent to checking the aggregate.
    """
    for idx, b in enumerate(net.blocks):
        if not controllable(net.A[b.state, b.state], net.B[b.state, b.input]):
            raise ControllabilityError(f"agent {idx}: (A_i, B_i) is not controllable")
    K = solve_control_dare(net.A, net.B, net.Q, net.R)
    L, M = gain_matrices(net.A, net.B, net.R, K)
    rho = spectral_radius(net.A + net.B @ L)
    if rho >= 1.0:
        logger.warning("closed loop spectral radius %.6g is not below one", rho)
    return K, L, M


def offset_iteration_matrix(A, B, R, K) -> np.ndarray:
    """A'[I - KB(R + B'KB)^-1 B'], which equals (A + BL)'."""
    n = A.shape[0]
    gram = R + B.T @ K @ B
    return A.T @ (np.eye(n) - K @ B @ np.linalg.solve(gram, B.T))


def solve_reference_offset(net: NetworkModel, K, reference=None) -> np.ndarray:
    """Offset g solving g = A'[I - KB(R+B'KB)^-1 B'] g - Q r, where r defaults
    to the released reference ``x_tilde``."""
    r = net.x_tilde if reference is None else _vector(reference, net.n, "reference")
    T = offset_iteration_matrix(net.A, net.B, net.R, K)
    try:
        return solve_linear(np.eye(net.n) - T, -net.Q @ r)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"offset equation is singular (iteration matrix spectral radius {spectral_radius(T):.6g})",
            condition=exc.condition,
        ) from None


def _is_block_diagonal(m: np.ndarray, rows: List[slice], cols: List[slice]) -> bool:
    mask = np.ones(m.shape, dtype=bool)
    for r, c in zip(rows, cols):
        mask[r, c] = False
    return not np.any(m[mask])


def posterior_from_prior(C, V, Sigma):
    """(Sigma_bar, kalman_gain) from the a priori covariance, in covariance form."""
    innov = C @ Sigma @ C.T + V
    gain = np.linalg.solve(innov, C @ Sigma).T
    return symmetrize(Sigma - gain @ C @ Sigma), gain


def filter_covariances(net: NetworkModel):
    """Steady-state a priori and a posteriori error covariances.

    When A, C, V and W share the agent block structure the filter Riccati
    equation decouples, and each block is solved on its own.
    """
    states = [b.state for b in net.blocks]
    outs = [b.output for b in net.blocks]
    if len(net.blocks) > 1 and all(
        _is_block_diagonal(mat, r, c)
        for mat, r, c in ((net.A, states, states), (net.C, outs, states), (net.V, outs, outs), (net.W, states, states))
    ):
        Sigma = block_diag(*[
            solve_filter_dare(net.A[s, s], net.C[o, s], net.V[o, o], net.W[s, s]) for s, o in zip(states, outs)
        ])
    else:
        Sigma = solve_filter_dare(net.A, net.C, net.V, net.W)
    Sigma_bar, _ = posterior_from_prior(net.C, net.V, Sigma)
    return Sigma, Sigma_bar


def synthesize(net: NetworkModel, gains=None) -> SynthesisResult:
    """All precomputed cloud artifacts for ``net``.

    ``gains`` may carry a previously computed (K, L, M); they do not depend on
    the noise, so sweeps over privacy levels can reuse them.
    """
    K, L, M = synthesize_gains(net) if gains is None else gains
    g = solve_reference_offset(net, K)
    Sigma, Sigma_bar = filter_covariances(net)
    _, gain = posterior_from_prior(net.C, net.V, Sigma)
    return SynthesisResult(K=K, L=L, M=M, g=g, Sigma=Sigma, Sigma_bar=Sigma_bar, kalman_gain=gain)


def closed_loop_matrix(net: NetworkModel, synth: SynthesisResult) -> np.ndarray:
    return net.A + net.B @ synth.L


def initial_filter_state(x0_mean) -> FilterState:
    x = np.asarray(x0_mean, dtype=float).copy()
    return FilterState(x_hat=x, x_prior=x.copy())


def filter_step(state: FilterState, synth: SynthesisResult, net: NetworkModel, u, y_next) -> FilterState:
    """Predict with the applied input, then correct with the next released output."""
    x_prior = net.A @ state.x_hat + net.B @ np.asarray(u, dtype=float)
    return correct(x_prior, synth, net, y_next)


def correct(x_prior, synth: SynthesisResult, net: NetworkModel, y) -> FilterState:
    innovation = np.asarray(y, dtype=float) - net.C @ x_prior
    return FilterState(x_hat=x_prior + synth.kalman_gain @ innovation, x_prior=np.asarray(x_prior, dtype=float))


def control_input(synth: SynthesisResult, x_hat) -> np.ndarray:
    return synth.L @ np.asarray(x_hat, dtype=float) + synth.M @ synth.g
