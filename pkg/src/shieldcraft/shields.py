"""Probabilistic shield synthesis over the safety product MDP.

Three designs, each yielding a per-state set of allowed actions, a safety
score per action, and a fallback action:

  one-step   allow actions whose one-step mass into the unsafe product
             states stays (strictly) below the threshold p
  two-step   recursively grow the unsafe set with states that have no
             allowed action, to a fixed point
  q-optimal  value-iterate the minimal probability of reaching the unsafe
             set within a horizon and allow actions whose backup value
             stays below p

The runtime filter passes allowed actions through unchanged, replaces a
disallowed action with the safest allowed one (lowest index on ties), and
falls back to the stored per-state fallback action when nothing is
allowed. For product states whose automaton component has already
accepted a violation every action looks equally unsafe, so the fallback
there minimizes the probability that the *next region entered* is itself
a violating one (the best available reading of "return to the safe set").
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .mdp import ProductMdp


class NonConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ShieldConfig:
    threshold: float = 0.05
    kind: str = "one"  # "one" | "two" | "q"
    horizon: int | None = None  # q-optimal only; None = infinite
    vi_tolerance: float = 1e-9
    vi_max_iters: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.kind not in ("one", "two", "q"):
            raise ValueError(f"unknown shield kind {self.kind!r}")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be a positive step count or None")


@dataclass(frozen=True)
class FilterDecision:
    action: int
    intervened: bool


@dataclass(frozen=True)
class Shield:
    kind: str
    threshold: float
    horizon: int | None
    allowed: tuple[tuple[int, ...], ...]
    fallback: tuple[int, ...]
    scores: tuple[tuple[float, ...], ...]
    unsafe_states: frozenset[int]
    values: tuple[float, ...] | None = None

    @property
    def n_states(self) -> int:
        return len(self.allowed)

    def filter(self, s: int, proposed: int) -> FilterDecision:
        allowed = self.allowed[s]
        if proposed in allowed:
            return FilterDecision(proposed, False)
        if allowed:
            row = self.scores[s]
            best = min(allowed, key=lambda a: (row[a], a))
            return FilterDecision(best, True)
        return FilterDecision(self.fallback[s], True)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.threshold,
            "horizon": self.horizon,
            "allowed": [list(a) for a in self.allowed],
            "fallback": list(self.fallback),
            "scores": [list(s) for s in self.scores],
            "unsafe": sorted(self.unsafe_states),
            "values": list(self.values) if self.values is not None else None,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Shield":
        values = data.get("values")
        return cls(
            kind=data["kind"],
            threshold=float(data["p"]),
            horizon=data.get("horizon"),
            allowed=tuple(tuple(int(a) for a in row) for row in data["allowed"]),
            fallback=tuple(int(a) for a in data["fallback"]),
            scores=tuple(tuple(float(x) for x in row) for row in data["scores"]),
            unsafe_states=frozenset(int(s) for s in data["unsafe"]),
            values=tuple(float(v) for v in values) if values is not None else None,
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Shield":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _transition_tensor(pm: ProductMdp) -> np.ndarray:
    """Dense (A, S, S) transition probabilities of the product."""
    t = np.zeros((pm.n_actions, pm.n_states, pm.n_states))
    for (s, a), row in pm.rows.items():
        for target, p in row:
            t[a, s, target] += p
    return t


def _mass_into(t: np.ndarray, member: np.ndarray) -> np.ndarray:
    """(S, A) probability mass into the indicated state set."""
    return (t @ member.astype(float)).T


def _region_return_fallback(pm: ProductMdp) -> np.ndarray:
    """Per (q, a): probability that the next region entered is freshly
    violating (its label fires the violation automaton from its start)."""
    d = pm.dfa
    base = pm.base
    bad_region = np.array(
        [int(d.delta[d.z0, base.labels[q]]) in d.accepting for q in range(base.n_states)]
    )
    mass = np.zeros((base.n_states, base.n_actions))
    for (q, a), row in base.rows.items():
        mass[q, a] = sum(p for target, p in row if bad_region[target])
    return mass


def _assemble(pm, cfg, kind, scores, unsafe, values=None) -> Shield:
    n_s, n_a = scores.shape
    allowed = tuple(
        tuple(a for a in range(n_a) if scores[s, a] < cfg.threshold) for s in range(n_s)
    )
    fallback = list(np.argmin(scores, axis=1))
    region_mass = _region_return_fallback(pm)
    for s in pm.final_states:
        q, _z = pm.decompose(s)
        fallback[s] = int(np.argmin(region_mass[q]))
    return Shield(
        kind=kind,
        threshold=cfg.threshold,
        horizon=cfg.horizon if kind == "q" else None,
        allowed=allowed,
        fallback=tuple(int(a) for a in fallback),
        scores=tuple(tuple(float(x) for x in row) for row in scores),
        unsafe_states=frozenset(unsafe),
        values=values,
    )


def one_step(pm: ProductMdp, cfg: ShieldConfig) -> Shield:
    """Allow actions keeping the one-step mass into the final (violating)
    product states strictly below the threshold."""
    t = _transition_tensor(pm)
    member = np.zeros(pm.n_states, dtype=bool)
    member[list(pm.final_states)] = True
    scores = _mass_into(t, member)
    return _assemble(pm, cfg, "one", scores, pm.final_states)


def two_step(pm: ProductMdp, cfg: ShieldConfig) -> Shield:
    """Grow the unsafe set with action-less states until a fixed point.

    Terminates in at most |S| iterations since the unsafe set can only
    grow.
    """
    t = _transition_tensor(pm)
    unsafe = np.zeros(pm.n_states, dtype=bool)
    unsafe[list(pm.final_states)] = True
    for _ in range(pm.n_states + 1):
        scores = _mass_into(t, unsafe)
        no_action = ~(scores < cfg.threshold).any(axis=1)
        grown = unsafe | no_action
        if (grown == unsafe).all():
            break
        unsafe = grown
    else:  # pragma: no cover - guarded by the monotone-growth argument
        raise AssertionError("two-step recursion failed to reach a fixed point")
    scores = _mass_into(t, unsafe)
    return _assemble(pm, cfg, "two", scores, frozenset(np.flatnonzero(unsafe).tolist()))


def q_optimal(pm: ProductMdp, cfg: ShieldConfig) -> Shield:
    """Dynamic-programming shield on minimal unsafe-reach probability.

    With a finite horizon N the action value is the exact probability of
    reaching the unsafe set within N steps (one step for the action itself
    plus N-1 backups); with an infinite horizon the values are iterated to
    a sup-norm fixed point.
    """
    t = _transition_tensor(pm)
    final = np.zeros(pm.n_states, dtype=bool)
    final[list(pm.final_states)] = True
    v = final.astype(float)
    if cfg.horizon is not None:
        for _ in range(max(0, cfg.horizon - 1)):
            backup = (t @ v).min(axis=0)
            v = np.where(final, 1.0, backup)
    else:
        for _ in range(cfg.vi_max_iters):
            new = np.where(final, 1.0, (t @ v).min(axis=0))
            if np.max(np.abs(new - v)) < cfg.vi_tolerance:
                v = new
                break
            v = new
        else:
            raise NonConvergenceError(
                f"value iteration did not converge within {cfg.vi_max_iters} sweeps"
            )
    scores = (t @ v).T
    return _assemble(
        pm, cfg, "q", scores, pm.final_states, values=tuple(float(x) for x in v)
    )


def synthesize(pm: ProductMdp, cfg: ShieldConfig) -> Shield:
    if cfg.kind == "one":
        return one_step(pm, cfg)
    if cfg.kind == "two":
        return two_step(pm, cfg)
    return q_optimal(pm, cfg)


class ShieldRuntime:
    """Deployable filter: tracks the violation automaton alongside the
    flight state and maps (cell, automaton state) to shield entries."""

    def __init__(self, shield: Shield, violation_dfa, partition):
        self.shield = shield
        self.dfa = violation_dfa
        self.partition = partition
        self.z = violation_dfa.z0

    def reset(self, labels: int):
        self.z = self.dfa.step(self.dfa.z0, labels)

    def update(self, labels: int):
        self.z = self.dfa.step(self.z, labels)

    def product_state(self, rate: float, wheel: float, charge: float) -> int:
        q = self.partition.locate_one(rate, wheel, charge)
        if q < 0:
            q = self.partition.n_cells
        return q * self.dfa.n_states + self.z

    def filter(self, coords, proposed: int) -> FilterDecision:
        return self.shield.filter(self.product_state(*coords), proposed)
