"""Scenario documents and result bundles.

Scenarios are JSON documents with three sections::

    {
      "agents": [ {...}, ... ]            or {"count": N, "template": {...}},
      "cost":   {"Q": <matrix spec>, "R": <matrix spec>},
      "sim":    {"steps": 100, "seed": 0, "runs": 1,
                 "reference_profile": "tanh", "initial_spread": 1.0}
    }

An agent holds ``A``, ``B``, ``C``, ``W`` (nested lists), ``privacy`` and
``reference_privacy`` (``{"epsilon", "delta"}``), ``adjacency``
(``{"trajectory_radius", "static_radius"}``), ``reference_limit`` and
optionally ``initial_mean``, ``initial_state`` and ``static_sensitivity``.
A matrix spec is either a nested list, ``{"scaled_identity": s}`` or
``{"diagonal": d, "coupling": [lo, hi], "seed": s}``; the latter draws
symmetric off-diagonal entries uniformly from [lo, hi] and halves them until
the matrix is positive definite (at most ten times).

Result bundles are written as CSV tables (17 significant digits, header row
starting with ``k``), JSON reports and a manifest carrying the seed, the
package version and the SHA-256 of the canonical scenario document.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .errors import DimensionError, DomainError, DplqgError, ScenarioError, ScenarioValidationError
from .matrix import is_positive_definite
from .mechanisms import AdjacencyParams, PrivacyParams, substream
from .sim import Scenario
from .synthesis import AgentModel

logger = logging.getLogger(__name__)

COUPLING_RETRIES = 10
FLOAT_FORMAT = "%.17g"


def _require(doc: dict, key: str, section: str):
    if not isinstance(doc, dict) or key not in doc:
        raise ScenarioValidationError("missing required key", section=section, key=key)
    return doc[key]


def _matrix(value, section: str, key: str) -> np.ndarray:
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioValidationError("not a numeric matrix", section=section, key=key) from None
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ScenarioValidationError(f"expected a 2-D matrix, got {a.ndim}-D", section=section, key=key)
    if not np.all(np.isfinite(a)):
        raise ScenarioValidationError("non-finite entry", section=section, key=key)
    return a


def coupled_cost_matrix(n: int, diagonal: float, low: float, high: float, seed: int) -> np.ndarray:
    """Diagonal ``diagonal`` plus symmetric uniform off-diagonal coupling.

    The off-diagonal part is halved until the matrix passes a Cholesky test.
    """
    rng = substream(seed, 0, "coupling")
    off = rng.uniform(low, high, size=(n, n))
    off = np.triu(off, 1)
    off = off + off.T
    for attempt in range(COUPLING_RETRIES + 1):
        Q = diagonal * np.eye(n) + off
        if is_positive_definite(Q):
            if attempt:
                logger.info("coupling shrunk %d times to keep Q positive definite", attempt)
            return Q
        off = 0.5 * off
    raise ScenarioValidationError("coupled matrix is not positive definite after shrinking",
                                  section="cost", key="Q")


def _matrix_spec(spec, n: int, section: str, key: str, seed: int) -> np.ndarray:
    if isinstance(spec, dict):
        if "scaled_identity" in spec:
            return float(spec["scaled_identity"]) * np.eye(n)
        if "diagonal" in spec:
            lo, hi = spec.get("coupling", [0.0, 0.0])
            return coupled_cost_matrix(n, float(spec["diagonal"]), float(lo), float(hi),
                                       int(spec.get("seed", seed)))
        raise ScenarioValidationError("unknown matrix spec", section=section, key=key)
    m = _matrix(spec, section, key)
    if m.shape != (n, n):
        raise ScenarioValidationError(f"expected shape ({n}, {n}), got {m.shape}", section=section, key=key)
    return m


def _privacy(doc, section: str, key: str) -> PrivacyParams:
    try:
        return PrivacyParams(float(_require(doc, "epsilon", f"{section}.{key}")),
                             float(_require(doc, "delta", f"{section}.{key}")))
    except DomainError as exc:
        raise ScenarioValidationError(str(exc), section=section, key=key) from None


def _agent(doc: dict, section: str) -> AgentModel:
    mats = {k: _matrix(_require(doc, k, section), section, k) for k in ("A", "B", "C", "W")}
    n = mats["A"].shape[0]
    if mats["A"].shape != (n, n):
        raise ScenarioValidationError("A must be square", section=section, key="A")
    if mats["B"].shape[0] != n:
        raise ScenarioValidationError(f"B must have {n} rows", section=section, key="B")
    if mats["C"].shape[1] != n:
        raise ScenarioValidationError(f"C must have {n} columns", section=section, key="C")
    if mats["W"].shape != (n, n):
        raise ScenarioValidationError(f"W must be {n}x{n}", section=section, key="W")
    if not is_positive_definite(mats["W"]):
        raise ScenarioValidationError("W must be symmetric positive definite", section=section, key="W")
    adj = doc.get("adjacency", {})
    try:
        adjacency = AdjacencyParams(float(adj.get("trajectory_radius", 1.0)), float(adj.get("static_radius", 1.0)))
    except DomainError as exc:
        raise ScenarioValidationError(str(exc), section=section, key="adjacency") from None
    vectors = {}
    for key in ("reference_limit", "initial_mean", "initial_state"):
        if key in doc and doc[key] is not None:
            vec = np.array(doc[key], dtype=float).reshape(-1)
            if vec.shape != (n,):
                raise ScenarioValidationError(f"expected length {n}", section=section, key=key)
            vectors[key] = vec
    if "reference_limit" not in vectors:
        raise ScenarioValidationError("missing required key", section=section, key="reference_limit")
    sens = doc.get("static_sensitivity")
    return AgentModel(
        A=mats["A"], B=mats["B"], C=mats["C"], W=mats["W"],
        privacy=_privacy(_require(doc, "privacy", section), section, "privacy"),
        reference_privacy=_privacy(_require(doc, "reference_privacy", section), section, "reference_privacy"),
        adjacency=adjacency,
        reference_limit=vectors["reference_limit"],
        initial_mean=vectors.get("initial_mean"),
        initial_state=vectors.get("initial_state"),
        static_sensitivity=None if sens is None else float(sens),
    )


def scenario_from_dict(doc: dict, seed: Optional[int] = None) -> Scenario:
    """Validate a scenario document; ``seed`` overrides ``sim.seed``."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    sim = doc.get("sim", {})
    seed = int(sim.get("seed", 0)) if seed is None else int(seed)
    agents_doc = _require(doc, "agents", "document")
    if isinstance(agents_doc, dict):
        count = int(_require(agents_doc, "count", "agents"))
        template = _require(agents_doc, "template", "agents")
        agents = [_agent(template, "agents.template") for _ in range(count)]
    elif isinstance(agents_doc, list):
        agents = [_agent(a, f"agents[{i}]") for i, a in enumerate(agents_doc)]
    else:
        raise ScenarioValidationError("must be a list or a template object", section="agents")
    if not agents:
        raise ScenarioValidationError("at least one agent is required", section="agents")
    n = sum(a.n for a in agents)
    m = sum(a.m for a in agents)
    cost = _require(doc, "cost", "document")
    Q = _matrix_spec(_require(cost, "Q", "cost"), n, "cost", "Q", seed)
    R = _matrix_spec(_require(cost, "R", "cost"), m, "cost", "R", seed)
    for name, mat in (("Q", Q), ("R", R)):
        if not is_positive_definite(mat):
            raise ScenarioValidationError("must be symmetric positive definite", section="cost", key=name)
    try:
        return Scenario(agents=agents, Q=Q, R=R, steps=int(sim.get("steps", 100)), seed=seed,
                        runs=int(sim.get("runs", 1)), reference_profile=sim.get("reference_profile", "tanh"),
                        initial_spread=float(sim.get("initial_spread", 1.0)), name=doc.get("name", "scenario"))
    except DplqgError as exc:
        raise ScenarioValidationError(str(exc), section="sim") from None


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc, seed=seed)


def _opt(v):
    return None if v is None else np.asarray(v).tolist()


def scenario_to_dict(sc: Scenario) -> dict:
    """Explicit (fully materialized) scenario document."""
    agents = []
    for a in sc.agents:
        agents.append({
            "A": a.A.tolist(), "B": a.B.tolist(), "C": a.C.tolist(), "W": a.W.tolist(),
            "privacy": {"epsilon": a.privacy.epsilon, "delta": a.privacy.delta},
            "reference_privacy": {"epsilon": a.reference_privacy.epsilon, "delta": a.reference_privacy.delta},
            "adjacency": {"trajectory_radius": a.adjacency.trajectory_radius,
                          "static_radius": a.adjacency.static_radius},
            "reference_limit": a.reference_limit.tolist(),
            "initial_mean": _opt(a.initial_mean),
            "initial_state": _opt(a.initial_state),
            "static_sensitivity": a.static_sensitivity,
        })
    return {
        "name": sc.name,
        "agents": agents,
        "cost": {"Q": sc.Q.tolist(), "R": sc.R.tolist()},
        "sim": {"steps": sc.steps, "seed": sc.seed, "runs": sc.runs,
                "reference_profile": sc.reference_profile, "initial_spread": sc.initial_spread},
    }


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def scenario_hash(sc: Scenario) -> str:
    """SHA-256 of the canonical materialized scenario; the display name is excluded."""
    doc = scenario_to_dict(sc)
    doc.pop("name")
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


@dataclass
class Table:
    columns: List[str]
    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns))


@dataclass
class ResultBundle:
    name: str
    seed: int
    scenario: Optional[Scenario] = None
    tables: Dict[str, Table] = field(default_factory=dict)
    reports: Dict[str, dict] = field(default_factory=dict)

    def add_table(self, name: str, columns: Sequence[str], rows) -> None:
        """Add a per-step table; a leading ``k`` index column is prepended."""
        rows = np.asarray(rows, dtype=float).reshape(-1, len(columns))
        k = np.arange(rows.shape[0], dtype=float).reshape(-1, 1)
        self.tables[name] = Table(["k", *columns], np.hstack([k, rows]))


def write_table(path: str, table: Table) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(FLOAT_FORMAT % v for v in row) + "\n")


def read_table(path) -> Table:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
    return Table(header, np.array(rows, dtype=float).reshape(-1, len(header)))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_results(bundle: ResultBundle, directory) -> List[str]:
    """Write the bundle; returns the sorted list of file names written."""
    try:
        os.makedirs(directory, exist_ok=True)
        files = []
        for name, table in sorted(bundle.tables.items()):
            fname = f"{name}.csv"
            write_table(os.path.join(directory, fname), table)
            files.append(fname)
        if bundle.reports:
            with open(os.path.join(directory, "reports.json"), "w", encoding="utf-8") as fh:
                json.dump(_jsonable(bundle.reports), fh, indent=2, sort_keys=True)
                fh.write("\n")
            files.append("reports.json")
        manifest = {"name": bundle.name, "seed": bundle.seed, "version": __version__}
        if bundle.scenario is not None:
            with open(os.path.join(directory, "scenario.json"), "w", encoding="utf-8") as fh:
                fh.write(canonical_json(scenario_to_dict(bundle.scenario)) + "\n")
            files.append("scenario.json")
            manifest["scenario_hash"] = scenario_hash(bundle.scenario)
        manifest["files"] = sorted(files)
        with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise DplqgError(f"cannot write results to {exc.filename or directory}: {exc.strerror}") from None
    return sorted(files + ["manifest.json"])
