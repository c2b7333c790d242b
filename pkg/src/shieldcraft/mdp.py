"""Explicit finite MDPs, DFA products, and finite-trace checking.

Transition rows are sparse ``(target, probability)`` lists in canonical
(target-sorted) order; labels are bitmasks over the proposition table, so
a state's label is directly a DFA input symbol.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .dfa import Dfa

ROW_SUM_TOL = 1e-9


class AtomMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class RowSumError:
    state: int
    action: int
    total: float


@dataclass(frozen=True)
class MissingActionError:
    state: int
    action: int


@dataclass(frozen=True)
class ProbabilityError:
    state: int
    action: int
    target: int
    probability: float


@dataclass(frozen=True)
class FiniteMdp:
    """Explicit MDP with total action availability and labelled states."""

    n_states: int
    action_names: tuple[str, ...]
    rows: dict[tuple[int, int], tuple[tuple[int, float], ...]]
    labels: tuple[int, ...]
    atom_names: tuple[str, ...]
    state_meta: tuple = None

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    def row(self, state: int, action: int) -> tuple[tuple[int, float], ...]:
        return self.rows[(state, action)]

    def validate(self) -> list:
        """All violated stochasticity/totality invariants, never raises."""
        defects = []
        for q in range(self.n_states):
            for a in range(self.n_actions):
                row = self.rows.get((q, a))
                if row is None:
                    defects.append(MissingActionError(q, a))
                    continue
                total = 0.0
                for target, p in row:
                    total += p
                    if not 0.0 <= p <= 1.0 or not 0 <= target < self.n_states:
                        defects.append(ProbabilityError(q, a, target, p))
                if abs(total - 1.0) > ROW_SUM_TOL:
                    defects.append(RowSumError(q, a, total))
        return defects

    # --- canonical JSON form ------------------------------------------

    def to_json(self) -> dict:
        transitions = []
        for (q, a) in sorted(self.rows):
            for target, p in self.rows[(q, a)]:
                transitions.append([q, a, target, p])
        labels = []
        for q, mask in enumerate(self.labels):
            names = [self.atom_names[i] for i in range(len(self.atom_names)) if mask >> i & 1]
            labels.append([q, names])
        states: dict = {"count": self.n_states}
        if self.state_meta is not None:
            states["metadata"] = list(self.state_meta)
        return {
            "states": states,
            "actions": list(self.action_names),
            "transitions": transitions,
            "labels": labels,
            "atoms": list(self.atom_names),
        }

    @classmethod
    def from_json(cls, data: dict) -> "FiniteMdp":
        atom_names = tuple(data["atoms"])
        atom_index = {name: i for i, name in enumerate(atom_names)}
        n = int(data["states"]["count"])
        rows: dict = {}
        for q, a, target, p in data["transitions"]:
            rows.setdefault((int(q), int(a)), []).append((int(target), float(p)))
        frozen = {key: tuple(sorted(val)) for key, val in rows.items()}
        labels = [0] * n
        for q, names in data["labels"]:
            mask = 0
            for name in names:
                mask |= 1 << atom_index[name]
            labels[int(q)] = mask
        meta = data["states"].get("metadata")
        return cls(
            n_states=n,
            action_names=tuple(data["actions"]),
            rows=frozen,
            labels=tuple(labels),
            atom_names=atom_names,
            state_meta=tuple(meta) if meta is not None else None,
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FiniteMdp":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class ProductMdp:
    """Synchronous composition of a FiniteMdp with a DFA.

    Product state (q, z) is flattened as ``q * n_z + z``. Stepping into
    base state q' advances the DFA on the label of q' (the label of the
    newly entered state), and runs are initialized by first consuming the
    label of the start state, see `initial_state`.
    """

    base: FiniteMdp
    dfa: Dfa
    rows: dict[tuple[int, int], tuple[tuple[int, float], ...]]
    final_states: frozenset[int]
    sink_states: frozenset[int]

    @property
    def n_z(self) -> int:
        return self.dfa.n_states

    @property
    def n_states(self) -> int:
        return self.base.n_states * self.dfa.n_states

    @property
    def n_actions(self) -> int:
        return self.base.n_actions

    def state_index(self, q: int, z: int) -> int:
        return q * self.n_z + z

    def decompose(self, s: int) -> tuple[int, int]:
        return divmod(s, self.n_z)

    def initial_state(self, q: int) -> int:
        z = self.dfa.step(self.dfa.z0, self.base.labels[q])
        return self.state_index(q, z)

    def row(self, s: int, a: int) -> tuple[tuple[int, float], ...]:
        return self.rows[(s, a)]


def product(m: FiniteMdp, d: Dfa) -> ProductMdp:
    """Full product over Q x Z (all DFA states, reachable or not)."""
    if m.atom_names != d.atom_names:
        raise AtomMismatchError(
            f"MDP atoms {m.atom_names} do not match DFA atoms {d.atom_names}"
        )
    n_z = d.n_states
    rows: dict = {}
    for (q, a), row in m.rows.items():
        for z in range(n_z):
            out = []
            for q2, p in row:
                z2 = int(d.delta[z, m.labels[q2]])
                out.append((q2 * n_z + z2, p))
            rows[(q * n_z + z, a)] = tuple(sorted(out))
    final = frozenset(
        q * n_z + z for q in range(m.n_states) for z in d.accepting
    )
    sinks = frozenset(q * n_z + z for q in range(m.n_states) for z in d.sinks)
    return ProductMdp(base=m, dfa=d, rows=rows, final_states=final, sink_states=sinks)


@dataclass(frozen=True)
class TraceCheck:
    sat_liveness: bool
    first_liveness: int | None
    violated_safety: bool
    first_violation: int | None

    @property
    def satisfied(self) -> bool:
        return self.sat_liveness and not self.violated_safety


def check_trace(trace: Sequence[int], dfa_liveness: Dfa, dfa_violation: Dfa) -> TraceCheck:
    """Judge one observation trace against a liveness DFA and a
    safety-violation DFA (compiled from the negated safety formula)."""
    first_l = dfa_liveness.first_accept(trace)
    first_v = dfa_violation.first_accept(trace)
    return TraceCheck(
        sat_liveness=first_l is not None,
        first_liveness=first_l,
        violated_safety=first_v is not None,
        first_violation=first_v,
    )
