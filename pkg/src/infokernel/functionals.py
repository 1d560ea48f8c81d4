"""Information functionals on measures and their convex duals.

Three functionals are provided:

* ``ExtendedKL(y0)`` -- the Kullback-Leibler divergence extended to all
  nonnegative measures,

      F(y) = sum_w [ y ln(y/y0) - y + y0 ],

  with the conventions ``0 ln 0 = 0`` and ``F = +inf`` whenever ``y``
  charges a ``y0``-null atom.  Its dual is evaluated in the exponential
  form ``F*(x) = <1, y0 e^x>``; note that this differs from the exact
  Fenchel conjugate by the additive constant ``<1, y0>``, which is
  exposed as ``dual_constant`` so identities can carry it explicitly.

* ``NegEntropy`` -- ``F(y) = <ln y - 1, y>``, minimized at the counting
  measure where it equals ``-n``.  Its exact conjugate is ``<1, e^x>``.

* ``TotalVariation(y0)`` -- ``F(y) = ||y - y0||_1``.  Its dual is not
  strictly convex, the subdifferential map is multi-valued, and solvers
  must route this functional to the linear-programming path
  (``solver.solve_tv``); ``dual_subgradient`` raises accordingly.

All exponentials go through max-shifted log-sum-exp so tilts up to
``|beta x| ~ 700`` stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spaces import (
    DimensionMismatchError,
    FiniteSpace,
    JointSpace,
    Measure,
    ProbMeasure,
    Utility,
    measure_from_json,
    normalize,
    space_from_json,
)


class MultiValuedDualError(RuntimeError):
    """The dual subdifferential has no single representative element."""


def _check_same_length(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionMismatchError("operands have different lengths")


# ---------------------------------------------------------------------------
# Pointwise formulas
# ---------------------------------------------------------------------------

def kl_eval(y: Measure, y0: Measure) -> float:
    """Extended KL divergence sum[y ln(y/y0) - y + y0]; +inf off y0's support."""
    w, w0 = y.weights, y0.weights
    _check_same_length(w, w0)
    if np.any((w > 0) & (w0 == 0)):
        return math.inf
    pos = w > 0
    terms = np.array(w0, dtype=float)          # y = 0 contributes y0 exactly
    with np.errstate(divide="ignore"):
        terms[pos] = w[pos] * np.log(w[pos] / w0[pos]) - w[pos] + w0[pos]
    return float(terms.sum())


def kl_dual_log_eval(x: Utility, y0: Measure) -> float:
    """log <1, y0 e^x> via a max-shifted sum; -inf for an empty support."""
    w0 = y0.weights
    _check_same_length(x.values, w0)
    live = (~x.excluded) & (w0 > 0)
    if not live.any():
        return -math.inf
    with np.errstate(divide="ignore"):
        expo = np.log(w0[live]) + x.values[live]
    m = float(expo.max())
    return m + math.log(np.exp(expo - m).sum())


def kl_dual_eval(x: Utility, y0: Measure) -> float:
    """<1, y0 e^x>, with excluded coordinates contributing e^{-inf} = 0."""
    log_val = kl_dual_log_eval(x, y0)
    if log_val == -math.inf:
        return 0.0
    return math.exp(log_val)  # may overflow to inf for extreme tilts


def kl_dual_subgradient(x: Utility, y0: Measure) -> Measure:
    """The exponential-family element y(w) = y0(w) e^{x(w)}."""
    w0 = y0.weights
    _check_same_length(x.values, w0)
    w = np.where(x.excluded, 0.0, w0 * np.exp(np.where(x.excluded, 0.0, x.values)))
    if not np.all(np.isfinite(w)):
        raise OverflowError("exponential tilt overflowed; use the normalized path")
    return Measure(y0.space, w)


def negentropy_eval(y: Measure) -> float:
    """sum y (ln y - 1) with 0 ln 0 = 0; equals -n at the counting measure."""
    w = y.weights
    pos = w > 0
    terms = np.zeros_like(w)
    terms[pos] = w[pos] * (np.log(w[pos]) - 1.0)
    return float(terms.sum())


def tv_eval(y: Measure, y0: Measure) -> float:
    """Total variation distance sum |y - y0|."""
    _check_same_length(y.weights, y0.weights)
    return float(np.abs(y.weights - y0.weights).sum())


# ---------------------------------------------------------------------------
# Functional objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExtendedKL:
    """KL-divergence information resource relative to a reference measure."""

    reference: Measure
    mode: str = "simplex"

    kind = "extended_kl"
    strictly_convex_dual = True

    def __post_init__(self):
        if self.mode not in ("cone", "simplex"):
            raise ValueError("mode must be 'cone' or 'simplex'")
        if self.reference.total_mass <= 0:
            raise ValueError("reference measure must have positive mass")

    @property
    def dual_constant(self) -> float:
        """Additive gap between the exponential dual form and the exact conjugate."""
        return self.reference.total_mass

    def evaluate(self, y: Measure) -> float:
        return kl_eval(y, self.reference)

    def dual_evaluate(self, x: Utility) -> float:
        return kl_dual_eval(x, self.reference)

    def dual_log_evaluate(self, x: Utility) -> float:
        return kl_dual_log_eval(x, self.reference)

    def dual_subgradient(self, x: Utility) -> Measure:
        return kl_dual_subgradient(x, self.reference)

    def simplex_reference(self) -> ProbMeasure:
        return normalize(self.reference)

    def log_reference(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.simplex_reference().weights)


@dataclass(frozen=True, eq=False)
class NegEntropy:
    """Negative entropy <ln y - 1, y>; the reference is the counting measure."""

    space: FiniteSpace | JointSpace
    mode: str = "cone"

    kind = "neg_entropy"
    strictly_convex_dual = True
    dual_constant = 0.0

    def __post_init__(self):
        if self.mode not in ("cone", "simplex"):
            raise ValueError("mode must be 'cone' or 'simplex'")

    @property
    def reference(self) -> Measure:
        return Measure(self.space, np.ones(self.space.size))

    def evaluate(self, y: Measure) -> float:
        return negentropy_eval(y)

    def dual_evaluate(self, x: Utility) -> float:
        return kl_dual_eval(x, self.reference)

    def dual_log_evaluate(self, x: Utility) -> float:
        return kl_dual_log_eval(x, self.reference)

    def dual_subgradient(self, x: Utility) -> Measure:
        return kl_dual_subgradient(x, self.reference)

    def simplex_reference(self) -> ProbMeasure:
        return ProbMeasure.uniform(self.space)

    def log_reference(self) -> np.ndarray:
        return np.zeros(self.space.size)  # uniform tilt base, constants cancel


@dataclass(frozen=True, eq=False)
class TotalVariation:
    """Total variation ball resource; multi-valued dual, LP solution path."""

    reference: Measure
    mode: str = "simplex"

    kind = "total_variation"
    strictly_convex_dual = False
    dual_constant = 0.0

    def __post_init__(self):
        if self.mode not in ("cone", "simplex"):
            raise ValueError("mode must be 'cone' or 'simplex'")

    def evaluate(self, y: Measure) -> float:
        return tv_eval(y, self.reference)

    def dual_evaluate(self, x: Utility) -> float:
        # exact conjugate: <x, y0> on the unit sup-norm ball, +inf outside
        if x.excluded.any() or float(np.abs(x.values).max()) > 1.0:
            return math.inf
        return float(np.dot(x.values, self.reference.weights))

    def dual_subgradient(self, x: Utility) -> Measure:
        raise MultiValuedDualError(
            "total variation has no strictly convex dual; solve with solver.solve_tv")

    def simplex_reference(self) -> ProbMeasure:
        return normalize(self.reference)


InfoFunctional = ExtendedKL | NegEntropy | TotalVariation


# ---------------------------------------------------------------------------
# JSON configuration
# ---------------------------------------------------------------------------

def functional_to_json(f: InfoFunctional) -> dict:
    obj = {"kind": f.kind, "mode": f.mode}
    if f.kind == "neg_entropy":
        obj["reference"] = f.reference.to_json()
    else:
        obj["reference"] = f.reference.to_json()
    return obj


def functional_from_json(obj: dict, space=None) -> InfoFunctional:
    kind = obj["kind"]
    mode = obj.get("mode", "simplex")
    if kind == "neg_entropy":
        if space is None:
            space = space_from_json(obj["reference"]["space"])
        return NegEntropy(space, mode=mode)
    ref = measure_from_json(obj["reference"], space)
    if kind == "extended_kl":
        return ExtendedKL(ref, mode=mode)
    if kind == "total_variation":
        return TotalVariation(ref, mode=mode)
    raise ValueError(f"unknown functional kind {kind!r}")
