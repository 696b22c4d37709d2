"""
Single-phase radial feeder model.

Node 0 is the substation (slack, V = 1∠0 pu).  Everything inside the model
is per unit on ``base_kva``; documents carry kW/kVA and are converted on
load.  Injections are positive for generation.

Rules checked on construction:
  • node ids are 0..n−1 and node 0 exists
  • branches form a tree rooted at node 0
  • r >= 0 on every branch and no branch has zero impedance
  • devices sit on existing nodes; PV has a rating, TCL has P_max and agents
"""
from __future__ import annotations

import json
import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import InputValidationError
from ..schemas import FeederDoc

logger = logging.getLogger(__name__)

SLACK = 0


@dataclass(frozen=True)
class Branch:
    from_node: int
    to_node: int
    r: float
    x: float

    @property
    def impedance(self) -> complex:
        return complex(self.r, self.x)


@dataclass(frozen=True)
class Device:
    id: str
    kind: str                       # "pv" | "tcl"
    node: int
    rating: float = 0.0             # pu
    p_max: float = 0.0              # pu, total rated TCL power
    agents: int = 0

    @property
    def is_pv(self) -> bool:
        return self.kind == "pv"

    @property
    def is_tcl(self) -> bool:
        return self.kind == "tcl"


@dataclass(frozen=True)
class Injections:
    """Per-node net injection (pu); index = node id."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != q.shape or p.ndim != 1:
            raise InputValidationError(f"Injection vectors disagree: p {p.shape}, q {q.shape}.")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def zeros(cls, n: int) -> "Injections":
        return cls(np.zeros(n), np.zeros(n))

    @property
    def apparent(self) -> np.ndarray:
        return self.p + 1j * self.q

    def __add__(self, other: "Injections") -> "Injections":
        return Injections(self.p + other.p, self.q + other.q)

    def scaled(self, factor: float) -> "Injections":
        return Injections(self.p * factor, self.q * factor)

    def with_added(self, node: int, dp: float = 0.0, dq: float = 0.0) -> "Injections":
        p, q = self.p.copy(), self.q.copy()
        p[node] += dp
        q[node] += dq
        return Injections(p, q)


@dataclass(frozen=True)
class FeederModel:
    name: str
    base_kva: float
    num_nodes: int
    branches: tuple[Branch, ...]
    devices: tuple[Device, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        errors = validate_feeder_soft(self)
        if errors:
            raise InputValidationError(errors)

    # ─── Lookups ───

    @property
    def pv_devices(self) -> list[Device]:
        return [d for d in self.devices if d.is_pv]

    @property
    def tcl_devices(self) -> list[Device]:
        return [d for d in self.devices if d.is_tcl]

    def device(self, device_id: str) -> Device:
        for d in self.devices:
            if d.id == device_id:
                return d
        raise InputValidationError(f"Unknown device '{device_id}' on feeder '{self.name}'.")

    def to_pu(self, kw: float) -> float:
        return kw / self.base_kva

    def to_kw(self, pu: float) -> float:
        return pu * self.base_kva

    def ybus(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for br in self.branches:
            y = 1.0 / br.impedance
            rows += [br.from_node, br.to_node, br.from_node, br.to_node]
            cols += [br.from_node, br.to_node, br.to_node, br.from_node]
            vals += [y, y, -y, -y]
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.num_nodes, self.num_nodes), dtype=complex)

    def depth(self) -> np.ndarray:
        """Number of branches between each node and the substation."""
        children = defaultdict(list)
        for br in self.branches:
            children[br.from_node].append(br.to_node)
            children[br.to_node].append(br.from_node)
        depth = -np.ones(self.num_nodes, dtype=int)
        depth[SLACK] = 0
        queue = deque([SLACK])
        while queue:
            node = queue.popleft()
            for nxt in children[node]:
                if depth[nxt] < 0:
                    depth[nxt] = depth[node] + 1
                    queue.append(nxt)
        return depth

    # ─── Construction ───

    @classmethod
    def from_doc(cls, doc: FeederDoc) -> "FeederModel":
        if sorted(doc.nodes) != list(range(len(doc.nodes))):
            raise InputValidationError("Feeder nodes must be numbered 0..n-1 with 0 the substation.")
        base = doc.base_kva
        branches = tuple(Branch(b.from_node, b.to_node, b.r, b.x) for b in doc.branches)
        devices = tuple(
            Device(
                id=d.id,
                kind=d.kind,
                node=d.node,
                rating=(d.rating_kva or 0.0) / base,
                p_max=(d.p_max_kw or 0.0) / base,
                agents=d.agents or 0,
            )
            for d in doc.devices
        )
        return cls(name=doc.name, base_kva=base, num_nodes=len(doc.nodes), branches=branches, devices=devices)

    @classmethod
    def line(cls, num_nodes: int, r: float, x: float, name: str = "line") -> "FeederModel":
        """A plain chain 0-1-…-(num_nodes−1) with identical branches."""
        branches = tuple(Branch(k, k + 1, r, x) for k in range(num_nodes - 1))
        return cls(name=name, base_kva=1000.0, num_nodes=num_nodes, branches=branches)

    def injections_from_rows(self, rows: Sequence[tuple[int, float, float]]) -> Injections:
        """(node, p, q) rows in pu, summed per node."""
        inj = Injections.zeros(self.num_nodes)
        for node, p, q in rows:
            if not 0 <= node < self.num_nodes:
                raise InputValidationError(f"Injection references unknown node {node}.")
            inj = inj.with_added(int(node), p, q)
        return inj


# ─── Validation rules ───────────────────────────────────────────────────────

def _check_nodes(f: FeederModel, errors: list[str]) -> None:
    if f.num_nodes < 1:
        errors.append("Feeder needs at least the substation node.")
    if f.base_kva <= 0:
        errors.append(f"base_kva must be positive, got {f.base_kva}.")


def _check_tree(f: FeederModel, errors: list[str]) -> None:
    for br in f.branches:
        for node in (br.from_node, br.to_node):
            if not 0 <= node < f.num_nodes:
                errors.append(f"Branch {br.from_node}-{br.to_node} references unknown node {node}.")
                return
    if len(f.branches) != f.num_nodes - 1:
        errors.append(f"A radial feeder with {f.num_nodes} nodes needs {f.num_nodes - 1} branches, "
                      f"got {len(f.branches)}.")
        return
    unreachable = np.flatnonzero(f.depth() < 0)
    if unreachable.size:
        errors.append(f"Nodes {unreachable.tolist()} are not connected to the substation.")


def _check_impedances(f: FeederModel, errors: list[str]) -> None:
    for br in f.branches:
        if br.r < 0:
            errors.append(f"Branch {br.from_node}-{br.to_node} has negative resistance {br.r}.")
        if br.impedance == 0:
            errors.append(f"Branch {br.from_node}-{br.to_node} has zero impedance.")


def _check_devices(f: FeederModel, errors: list[str]) -> None:
    seen = set()
    for d in f.devices:
        if d.id in seen:
            errors.append(f"Duplicate device id '{d.id}'.")
        seen.add(d.id)
        if not 0 <= d.node < f.num_nodes:
            errors.append(f"Device '{d.id}' sits on unknown node {d.node}.")
        if d.kind not in ("pv", "tcl"):
            errors.append(f"Device '{d.id}' has unknown kind '{d.kind}'.")
        elif d.is_pv and d.rating <= 0:
            errors.append(f"PV '{d.id}' needs a positive rating.")
        elif d.is_tcl and (d.p_max <= 0 or d.agents < 1):
            errors.append(f"TCL population '{d.id}' needs positive p_max and at least one agent.")


ALL_RULES = [_check_nodes, _check_tree, _check_impedances, _check_devices]


def validate_feeder_soft(feeder: FeederModel) -> list[str]:
    errors: list[str] = []
    for rule in ALL_RULES:
        rule(feeder, errors)
    return errors


def load_feeder(path: str | Path) -> FeederModel:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    feeder = FeederModel.from_doc(FeederDoc.model_validate(raw))
    logger.info("Loaded feeder '%s' (%d nodes, %d devices) from %s",
                feeder.name, feeder.num_nodes, len(feeder.devices), path)
    return feeder


def injections_for(feeder: FeederModel, pv_setpoints: Optional[np.ndarray] = None,
                   tcl_power: Optional[np.ndarray] = None) -> Injections:
    """Device injections only: PV (p, q) rows in ``pv_devices`` order, TCL consumption in pu."""
    inj = Injections.zeros(feeder.num_nodes)
    if pv_setpoints is not None:
        for dev, (p, q) in zip(feeder.pv_devices, np.asarray(pv_setpoints, dtype=float).reshape(-1, 2)):
            inj = inj.with_added(dev.node, p, q)
    if tcl_power is not None:
        for dev, p in zip(feeder.tcl_devices, np.atleast_1d(tcl_power)):
            inj = inj.with_added(dev.node, -float(p), 0.0)
    return inj
