"""Trajectories, target sets and first-hit records shared by both simulators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .model import ModelSpec, dbar


@dataclass(frozen=True)
class Target:
    """A set whose first entry time is recorded.

    ``kind`` is one of ``corner0``, ``corner1``, ``delta0``, ``delta1`` or
    ``custom`` (then ``predicate`` maps an (n, m) array to a boolean mask).
    """

    name: str
    kind: str
    alpha: float | None = None
    predicate: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def contains(self, x: np.ndarray, spec: ModelSpec) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "corner0":
            return np.all(x == 0.0, axis=-1)
        if self.kind == "corner1":
            return np.all(x == 1.0, axis=-1)
        if self.kind == "delta0":
            return dbar(x, spec) < self.alpha
        if self.kind == "delta1":
            return dbar(1.0 - x, spec) < self.alpha
        if self.kind == "custom" and self.predicate is not None:
            return np.asarray(self.predicate(x), dtype=bool)
        raise ConfigurationError(f"bad target {self!r}")


def corner_targets() -> list[Target]:
    return [Target("corner-0", "corner0"), Target("corner-1", "corner1")]


def delta_targets(alpha: float) -> list[Target]:
    return [Target("delta-0", "delta0", alpha), Target("delta-1", "delta1", alpha)]


@dataclass(frozen=True)
class HittingRecord:
    target: str
    time: float
    censored: bool


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    hits: list[HittingRecord]

    def hit(self, name: str) -> HittingRecord:
        for h in self.hits:
            if h.target == name:
                return h
        raise KeyError(name)

    def to_csv(self, path) -> None:
        m = self.states.shape[1]
        header = "t," + ",".join(f"x_{i + 1}" for i in range(m))
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for t, x in zip(self.times, self.states):
                fh.write(repr(float(t)) + "," + ",".join(repr(float(v)) for v in x) + "\n")
            fh.write("\ntarget,time,censored\n")
            for h in self.hits:
                fh.write(f"{h.target},{h.time!r},{str(h.censored).lower()}\n")


def first_hit_records(targets: Sequence[Target], first: dict[str, float], t_end: float) -> list[HittingRecord]:
    return [HittingRecord(t.name, first[t.name], False) if t.name in first
            else HittingRecord(t.name, t_end, True) for t in targets]


