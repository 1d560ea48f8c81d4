"""Finite sample spaces, nonnegative measures and utility vectors.

Everything in this module is immutable after construction and all
operations are pure, so instances can be shared freely between workers.
Weights are stored as read-only float64 arrays.

Conventions used throughout the package:

* a utility value of minus infinity is represented by an ``excluded``
  mask rather than by ``-inf`` floats, so that arithmetic stays finite;
* ``0 * (-inf) = 0``: an excluded coordinate carrying zero weight
  contributes nothing to a pairing;
* probability measures tolerate a normalization error of 1e-12 and
  constructors silently renormalize anything within 1e-9 of unit mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

NORMALIZATION_CERT = 1e-12   # |total mass - 1| accepted as normalized
NORMALIZATION_SLACK = 1e-9   # constructors renormalize within this, reject beyond


class DimensionMismatchError(ValueError):
    """Operands live on different spaces or have inconsistent lengths."""


class ZeroMassError(ValueError):
    """Normalization of a measure with zero total mass was requested."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    """An ordered finite index set with distinct element labels."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(l) for l in self.labels)
        if len(labels) < 1:
            raise ValueError("a finite space needs at least one element")
        if len(set(labels)) != len(labels):
            raise ValueError("space labels must be distinct")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of_size(cls, n: int, prefix: str = "w") -> "FiniteSpace":
        if n < 1:
            raise ValueError("space size must be >= 1")
        return cls(tuple(f"{prefix}{i}" for i in range(n)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class JointSpace:
    """Direct product A x B with a row-major flat index.

    The flat index of the pair (a, b) is ``a * |B| + b``; this single
    documented layout keeps kernel/joint conversions bit-reproducible.
    """

    space_a: FiniteSpace
    space_b: FiniteSpace

    @property
    def size(self) -> int:
        return self.space_a.size * self.space_b.size

    def flat_index(self, a: int, b: int) -> int:
        na, nb = self.space_a.size, self.space_b.size
        if not (0 <= a < na and 0 <= b < nb):
            raise IndexError(f"pair ({a},{b}) outside {na}x{nb} product")
        return a * nb + b

    def unflatten(self, k: int) -> tuple[int, int]:
        nb = self.space_b.size
        if not 0 <= k < self.size:
            raise IndexError(f"flat index {k} outside product of size {self.size}")
        return divmod(k, nb)

    @property
    def flat(self) -> FiniteSpace:
        """The product as a plain finite space with pair labels."""
        return FiniteSpace(tuple(
            f"({la},{lb})" for la in self.space_a.labels for lb in self.space_b.labels
        ))

    def __len__(self) -> int:
        return self.size


def _space_size(space) -> int:
    return space.size


@dataclass(frozen=True, eq=False)
class Measure:
    """A nonnegative finite measure given by one weight per element."""

    space: FiniteSpace | JointSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.shape[0] != _space_size(self.space):
            raise DimensionMismatchError(
                f"expected {_space_size(self.space)} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("measure weights must be finite")
        if np.any(w < 0):
            raise ValueError("measure weights must be nonnegative")
        object.__setattr__(self, "weights", _frozen_array(w))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def to_json(self) -> dict:
        return {"space": space_to_json(self.space), "weights": self.weights.tolist()}


class ProbMeasure(Measure):
    """A measure with unit total mass (the simplex element).

    Constructors renormalize inputs whose mass is within 1e-9 of one and
    reject anything further away; the stored mass then certifies
    ``|total - 1| <= 1e-12``.
    """

    def __post_init__(self):
        super().__post_init__()
        total = float(self.weights.sum())
        if abs(total - 1.0) > NORMALIZATION_SLACK:
            raise ValueError(f"weights sum to {total}, too far from 1 to renormalize")
        if abs(total - 1.0) > NORMALIZATION_CERT:
            object.__setattr__(self, "weights", _frozen_array(self.weights / total))

    @classmethod
    def uniform(cls, space) -> "ProbMeasure":
        n = _space_size(space)
        return cls(space, np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, space, index: int) -> "ProbMeasure":
        w = np.zeros(_space_size(space))
        w[index] = 1.0
        return cls(space, w)


@dataclass(frozen=True, eq=False)
class Utility:
    """A real objective vector with an exclusion mask for -inf entries."""

    space: FiniteSpace | JointSpace
    values: np.ndarray
    excluded: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        n = _space_size(self.space)
        if v.ndim != 1 or v.shape[0] != n:
            raise DimensionMismatchError(f"expected {n} values, got shape {v.shape}")
        if self.excluded is None:
            mask = np.zeros(n, dtype=bool)
        else:
            mask = np.asarray(self.excluded, dtype=bool)
            if mask.shape != (n,):
                raise DimensionMismatchError("exclusion mask length mismatch")
            mask = mask.copy()
        # -inf literals in the input are folded into the mask
        mask |= np.isneginf(v)
        v = np.where(mask, 0.0, v)
        if not np.all(np.isfinite(v)):
            raise ValueError("non-excluded utility values must be finite")
        if mask.all():
            raise ValueError("utility must have at least one non-excluded entry")
        object.__setattr__(self, "values", _frozen_array(v))
        object.__setattr__(self, "excluded", _frozen_array(mask, dtype=bool))

    @property
    def finite_values(self) -> np.ndarray:
        return self.values[~self.excluded]

    def negated(self) -> "Utility":
        if self.excluded.any():
            raise ValueError("cannot negate a utility with excluded (-inf) entries")
        return Utility(self.space, -self.values)

    def to_json(self) -> dict:
        return {
            "values": self.values.tolist(),
            "excluded": [int(i) for i in np.flatnonzero(self.excluded)],
        }


def pair(x: Utility, y: Measure) -> float:
    """The bilinear pairing sum_w x(w) y(w).

    Returns ``-inf`` when ``y`` puts positive weight on an excluded
    coordinate of ``x`` (an excluded coordinate with zero weight
    contributes nothing).
    """
    if _space_size(x.space) != _space_size(y.space):
        raise DimensionMismatchError("utility and measure live on different spaces")
    if np.any(y.weights[x.excluded] > 0):
        return float("-inf")
    return float(np.dot(x.values, y.weights))


def normalize(y: Measure) -> ProbMeasure:
    """Scale a measure to unit mass, preserving its support exactly."""
    total = y.total_mass
    if total <= 0:
        raise ZeroMassError("cannot normalize a measure with zero total mass")
    return ProbMeasure(y.space, y.weights / total)


def support(y: Measure, eps: float = 0.0) -> frozenset[int]:
    """Indices carrying weight above ``eps`` (``eps=0`` gives exact support)."""
    if eps < 0:
        raise ValueError("support threshold must be >= 0")
    return frozenset(int(i) for i in np.flatnonzero(y.weights > eps))


def ones_utility(space) -> Utility:
    """The all-ones utility; pairs with a measure to its total mass."""
    return Utility(space, np.ones(_space_size(space)))


# ---------------------------------------------------------------------------
# JSON representations
# ---------------------------------------------------------------------------

def space_to_json(space) -> dict:
    if isinstance(space, JointSpace):
        return {
            "space_a": {"labels": list(space.space_a.labels)},
            "space_b": {"labels": list(space.space_b.labels)},
        }
    return {"labels": list(space.labels)}


def space_from_json(obj: dict) -> FiniteSpace | JointSpace:
    if "space_a" in obj:
        return JointSpace(space_from_json(obj["space_a"]), space_from_json(obj["space_b"]))
    return FiniteSpace(tuple(obj["labels"]))


def measure_from_json(obj: dict, space=None) -> Measure:
    if space is None:
        space = space_from_json(obj["space"])
    return Measure(space, np.asarray(obj["weights"], dtype=float))


def utility_from_json(obj: dict, space) -> Utility:
    values = np.asarray(obj["values"], dtype=float)
    mask = np.zeros(len(values), dtype=bool)
    for i in obj.get("excluded", []):
        mask[int(i)] = True
    return Utility(space, values, mask)
