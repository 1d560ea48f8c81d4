"""Markov transition kernels, mutual information and channel optimization.

Conventions: a kernel stores one probability row over the output
alphabet A for every input letter b in B; a joint measure over A x B is
kept as an (|A|, |B|) matrix whose flat layout matches
``JointSpace.flat_index`` (row-major in a).  Utility matrices are
indexed ``x[a, b]`` and may contain ``-inf`` for excluded pairs.  All
information quantities are in nats.

The information-constrained channel problem (find the kernel maximizing
expected utility at fixed input distribution, subject to a mutual
information budget) is solved by alternating multiplicative updates:

    q_{t+1}(a) = sum_b input(b) k_t(a|b)
    k_{t+1}(a|b) ~ q_{t+1}(a) e^{beta x(a,b)}

iterated until the output marginal moves by less than 1e-10 (or 1e4
iterations, in which case non-convergence is reported, never silently
accepted).  The fixed point has the exponential form
``k(a|b) = e^{beta x(a,b)} q(a) / Z(b)`` with ``q`` the optimal output
marginal.  Budget and value targets are met by an outer bisection on
``beta``, safe because both quantities are nondecreasing in ``beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .solver import BETA_MAX, InfeasibleError
from .spaces import (
    DimensionMismatchError,
    FiniteSpace,
    JointSpace,
    Measure,
    ProbMeasure,
    Utility,
)

BA_TOL = 1e-10
BA_MAX_ITER = 10_000
_ROW_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """The fixed-point iteration did not reach its residual tolerance."""


class ZeroAtomError(ValueError):
    """Conditioning on a zero-probability atom was requested."""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Kernel:
    """Row-stochastic conditional probabilities: rows[b] = P(. | b) over A."""

    joint_space: JointSpace
    rows: np.ndarray  # shape (|B|, |A|)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        nb, na = self.joint_space.space_b.size, self.joint_space.space_a.size
        if rows.shape != (nb, na):
            raise DimensionMismatchError(f"kernel rows must have shape ({nb},{na})")
        if np.any(rows < 0):
            raise ValueError("kernel entries must be nonnegative")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("kernel rows must sum to 1")
        if np.any(np.abs(sums - 1.0) > _ROW_TOL):
            rows = rows / sums[:, None]
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def row(self, b: int) -> ProbMeasure:
        return ProbMeasure(self.joint_space.space_a, self.rows[b])

    def to_json(self) -> dict:
        return {"rows": self.rows.tolist()}


@dataclass(frozen=True, eq=False)
class JointMeasure:
    """A probability measure on A x B with cached marginals."""

    joint_space: JointSpace
    matrix: np.ndarray        # shape (|A|, |B|)
    marginal_a: np.ndarray
    marginal_b: np.ndarray

    @classmethod
    def from_matrix(cls, joint_space: JointSpace, matrix) -> "JointMeasure":
        m = np.asarray(matrix, dtype=float)
        na, nb = joint_space.space_a.size, joint_space.space_b.size
        if m.shape != (na, nb):
            raise DimensionMismatchError(f"joint matrix must have shape ({na},{nb})")
        if np.any(m < 0):
            raise ValueError("joint weights must be nonnegative")
        total = m.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"joint mass {total} too far from 1")
        m = m / total
        m.setflags(write=False)
        ma = m.sum(axis=1)
        mb = m.sum(axis=0)
        ma.setflags(write=False)
        mb.setflags(write=False)
        return cls(joint_space, m, ma, mb)

    @property
    def prob(self) -> ProbMeasure:
        return ProbMeasure(self.joint_space.flat, self.matrix.ravel())

    def marginal_a_measure(self) -> ProbMeasure:
        return ProbMeasure(self.joint_space.space_a, self.marginal_a)

    def marginal_b_measure(self) -> ProbMeasure:
        return ProbMeasure(self.joint_space.space_b, self.marginal_b)


@dataclass(frozen=True, eq=False)
class FiniteMap:
    """A total map B -> A stored as an image index per input letter."""

    joint_space: JointSpace
    images: np.ndarray  # shape (|B|,), values in range(|A|)

    def __post_init__(self):
        img = np.asarray(self.images, dtype=int)
        nb, na = self.joint_space.space_b.size, self.joint_space.space_a.size
        if img.shape != (nb,):
            raise DimensionMismatchError(f"map needs {nb} image indices")
        if np.any(img < 0) or np.any(img >= na):
            raise ValueError("map image index out of range")
        img = img.copy()
        img.setflags(write=False)
        object.__setattr__(self, "images", img)

    @property
    def image_size(self) -> int:
        return len(np.unique(self.images))

    def fiber_sizes(self) -> np.ndarray:
        """|f^{-1}(f(b))| for each b."""
        counts = np.bincount(self.images, minlength=self.joint_space.space_a.size)
        return counts[self.images]

    def is_bijection(self) -> bool:
        na, nb = self.joint_space.space_a.size, self.joint_space.space_b.size
        return na == nb and self.image_size == nb


@dataclass(frozen=True, eq=False)
class ChannelSolution:
    """Optimized channel at one multiplier: kernel, value and information."""

    kernel: Kernel
    beta: float
    expected_utility: float
    mutual_info: float
    iterations: int
    converged: bool
    saturated: bool = False
    residual: float = 0.0
    note: str = ""


# ---------------------------------------------------------------------------
# Joint/kernel conversions and mutual information
# ---------------------------------------------------------------------------

def joint_from_kernel(input_dist: ProbMeasure, kernel: Kernel) -> JointMeasure:
    """P(a,b) = k(a|b) input(b); the B-marginal recovers the input exactly."""
    nb = kernel.joint_space.space_b.size
    if len(input_dist.weights) != nb:
        raise DimensionMismatchError("input distribution does not match |B|")
    matrix = kernel.rows.T * input_dist.weights[None, :]
    return JointMeasure.from_matrix(kernel.joint_space, matrix)


def bayes_kernel(joint: JointMeasure, direction: str = "a_given_b") -> Kernel:
    """Conditional rows P(a,b)/P(b) (or transposed); zero atoms are an error.

    Conditioning on a zero-probability atom is refused with the atom
    named rather than silently filled with a uniform row.
    """
    if direction == "a_given_b":
        cond = joint.marginal_b
        labels = joint.joint_space.space_b.labels
        mat = joint.matrix
        space = joint.joint_space
    elif direction == "b_given_a":
        cond = joint.marginal_a
        labels = joint.joint_space.space_a.labels
        mat = joint.matrix.T
        space = JointSpace(joint.joint_space.space_b, joint.joint_space.space_a)
    else:
        raise ValueError("direction must be 'a_given_b' or 'b_given_a'")
    zero = np.flatnonzero(cond <= 0)
    if zero.size:
        raise ZeroAtomError(
            f"cannot condition on zero-probability atom {labels[zero[0]]!r}")
    return Kernel(space, (mat / cond[None, :]).T)


def shannon_entropy(weights) -> float:
    """-sum p ln p in nats with 0 ln 0 = 0."""
    w = weights.weights if isinstance(weights, Measure) else np.asarray(weights, float)
    pos = w > 0
    return float(-(w[pos] * np.log(w[pos])).sum())


def mutual_information(joint: JointMeasure) -> float:
    """sum P(a,b) ln[P(a,b) / (P(a) P(b))] in nats, conventions 0 ln(0/.) = 0."""
    m = joint.matrix
    prod = np.outer(joint.marginal_a, joint.marginal_b)
    pos = m > 0
    return float((m[pos] * np.log(m[pos] / prod[pos])).sum())


# ---------------------------------------------------------------------------
# Deterministic kernels
# ---------------------------------------------------------------------------

def deterministic_kernel(f: FiniteMap) -> Kernel:
    """Each row is the Dirac measure on the mapped letter."""
    nb, na = f.joint_space.space_b.size, f.joint_space.space_a.size
    rows = np.zeros((nb, na))
    rows[np.arange(nb), f.images] = 1.0
    return Kernel(f.joint_space, rows)


def is_deterministic(kernel: Kernel, tol: float = 0.0) -> tuple[bool, FiniteMap | None]:
    """True when every row concentrates mass >= 1 - tol on one letter."""
    if not 0.0 <= tol < 0.5:
        raise ValueError("tolerance must be in [0, 0.5)")
    peaks = kernel.rows.max(axis=1)
    if np.all(peaks >= 1.0 - tol):
        return True, FiniteMap(kernel.joint_space, kernel.rows.argmax(axis=1))
    return False, None


def kernel_invertible(kernel: Kernel) -> bool:
    """Invertible iff exactly deterministic with a bijective underlying map."""
    det, f = is_deterministic(kernel, 0.0)
    return bool(det and f is not None and f.is_bijection())


def injectivity_index(f: FiniteMap) -> float:
    """|f(B)| / |B|: 1 for injections, 1/|B| for constant maps."""
    return f.image_size / f.joint_space.space_b.size


def maximizing_input(f: FiniteMap) -> ProbMeasure:
    """The input law whose pushforward under f is uniform on the image.

    P(b) = 1 / (|f(B)| |f^{-1}(f(b))|); the output entropy then equals
    ln |f(B)|, the most a deterministic kernel can communicate.
    """
    w = 1.0 / (f.image_size * f.fiber_sizes().astype(float))
    return ProbMeasure(f.joint_space.space_b, w)


def deterministic_mi_bound(f: FiniteMap, input_dist: ProbMeasure) -> tuple[float, float]:
    """(mutual information, ln|f(B)|) for the deterministic kernel of f."""
    mi = mutual_information(joint_from_kernel(input_dist, deterministic_kernel(f)))
    bound = math.log(f.image_size)
    if mi > bound + 1e-12:
        raise AssertionError(f"information {mi} exceeded the image bound {bound}")
    return mi, bound


# ---------------------------------------------------------------------------
# Exponential (Gibbs) kernels and channel optimization
# ---------------------------------------------------------------------------

def utility_matrix(x: Utility, joint_space: JointSpace) -> np.ndarray:
    """Utility on the product space as an (|A|, |B|) matrix with -inf exclusions."""
    na, nb = joint_space.space_a.size, joint_space.space_b.size
    vals = np.where(x.excluded, -math.inf, x.values)
    return vals.reshape(na, nb)


def _as_matrix(x, joint_space: JointSpace | None) -> tuple[np.ndarray, JointSpace]:
    if isinstance(x, Utility):
        if joint_space is None:
            space = x.space
            if not isinstance(space, JointSpace):
                raise ValueError("utility must live on a JointSpace")
            joint_space = space
        return utility_matrix(x, joint_space), joint_space
    mat = np.asarray(x, dtype=float)
    if mat.ndim != 2:
        raise DimensionMismatchError("utility matrix must be two-dimensional")
    if joint_space is None:
        joint_space = JointSpace(FiniteSpace.of_size(mat.shape[0], "a"),
                                 FiniteSpace.of_size(mat.shape[1], "b"))
    return mat, joint_space


def gibbs_kernel(x, beta: float, joint_space: JointSpace | None = None) -> Kernel:
    """Row-wise Gibbs tilt: k(a|b) ~ e^{beta x(a,b)}.

    beta = 0 gives uniform rows over the non-excluded letters; rows stay
    mutually absolutely continuous across beta for each fixed b, and the
    beta -> inf limit is the Dirac on the row argmax.
    """
    mat, joint_space = _as_matrix(x, joint_space)
    if np.any(np.all(np.isneginf(mat), axis=0)):
        raise ValueError("every input letter needs at least one non-excluded pair")
    logits = beta * mat
    logits -= logits.max(axis=0, keepdims=True)
    w = np.exp(logits)
    return Kernel(joint_space, (w / w.sum(axis=0, keepdims=True)).T)


class _ChannelProblem:
    """Masked working copy of a channel instance.

    Zero-mass input letters are dropped up front (their conditionals are
    arbitrary) and output letters excluded against every live input are
    removed; both are reinserted when the kernel is embedded back.
    """

    def __init__(self, x, input_dist, joint_space: JointSpace | None):
        mat, joint_space = _as_matrix(x, joint_space)
        in_w = (input_dist.weights if isinstance(input_dist, Measure)
                else np.asarray(input_dist, dtype=float))
        if in_w.shape != (joint_space.space_b.size,):
            raise DimensionMismatchError("input distribution does not match |B|")
        if np.any(in_w < 0):
            raise ValueError("input weights must be nonnegative")
        self.joint_space = joint_space
        self.input_weights = in_w
        self.live_b = in_w > 0
        sub = mat[:, self.live_b]
        if sub.size == 0:
            raise ValueError("input distribution carries no mass")
        if np.any(np.all(np.isneginf(sub), axis=0)):
            raise ValueError("an input letter with positive mass has all pairs excluded")
        self.live_a = ~np.all(np.isneginf(sub), axis=1)
        self.x_live = sub[self.live_a]
        self.w_b = in_w[self.live_b] / in_w[self.live_b].sum()

    def tilt(self, beta: float) -> np.ndarray:
        live = np.isfinite(self.x_live)
        return np.where(live, beta * np.where(live, self.x_live, 0.0), -math.inf)

    def uniform_marginal(self) -> np.ndarray:
        n = int(self.live_a.sum())
        return np.full(n, 1.0 / n)

    def value(self, k: np.ndarray) -> float:
        contrib = np.where(k > 0, k * np.where(np.isfinite(self.x_live), self.x_live, 0.0), 0.0)
        return float((contrib * self.w_b[None, :]).sum())

    def info(self, k: np.ndarray) -> float:
        q = k @ self.w_b
        pos = k > 0  # k > 0 forces q > 0 on the same letter
        qb = np.broadcast_to(q[:, None], k.shape)
        contrib = np.zeros_like(k)
        contrib[pos] = k[pos] * np.log(k[pos] / qb[pos])
        return float((contrib * self.w_b[None, :]).sum())

    def embed(self, k: np.ndarray) -> Kernel:
        na = self.joint_space.space_a.size
        nb = self.joint_space.space_b.size
        rows = np.zeros((nb, na))
        cols = np.zeros((na, int(self.live_b.sum())))
        cols[self.live_a, :] = k
        rows[self.live_b, :] = cols.T
        if not self.live_b.all():
            rows[~self.live_b, :] = 1.0 / na  # unconstrained rows on null inputs
        return Kernel(self.joint_space, rows)

    def iterate(self, beta: float, q_init: np.ndarray | None = None,
                tol: float = BA_TOL, max_iter: int = BA_MAX_ITER,
                trace: bool = False):
        """Run the alternating updates; returns (k, q, iters, converged, resid, hist)."""
        tilt = self.tilt(beta)
        q = self.uniform_marginal() if q_init is None else q_init / q_init.sum()
        history = []
        converged, residual = False, math.inf
        iterations = 0
        with np.errstate(divide="ignore"):
            for iterations in range(1, max_iter + 1):
                col = np.log(q)[:, None] + tilt
                shift = col.max(axis=0, keepdims=True)
                k = np.exp(col - shift)
                z = k.sum(axis=0, keepdims=True)
                k /= z
                if trace:
                    objective = float((self.w_b * (np.log(z[0]) + shift[0])).sum())
                    history.append((self.value(k), self.info(k), objective))
                q_new = k @ self.w_b
                residual = float(np.max(np.abs(q_new - q)))
                q = q_new
                if residual < tol:
                    converged = True
                    break
        return k, q, iterations, converged, residual, history

    def solution(self, k: np.ndarray, beta: float, iterations: int,
                 converged: bool, residual: float, **kw) -> ChannelSolution:
        return ChannelSolution(
            kernel=self.embed(k), beta=beta,
            expected_utility=self.value(k), mutual_info=self.info(k),
            iterations=iterations, converged=converged, residual=residual,
            note=kw.pop("note", "" if converged
                        else f"fixed point stalled at residual {residual:.3e}"),
            **kw)


def fixed_point_channel(x, input_dist, beta: float, *,
                        joint_space: JointSpace | None = None,
                        q_init: np.ndarray | None = None,
                        tol: float = BA_TOL, max_iter: int = BA_MAX_ITER,
                        trace: bool = False):
    """Alternating marginal/kernel updates at a fixed multiplier.

    The output marginal starts uniform over the letters with at least
    one non-excluded pair, so positivity is never lost by the
    multiplicative updates.  With ``trace=True`` also returns the
    per-iteration (value, information, ascent objective) history.
    """
    problem = _ChannelProblem(x, input_dist, joint_space)
    k, _, iterations, converged, residual, history = problem.iterate(
        beta, q_init=q_init, tol=tol, max_iter=max_iter, trace=trace)
    solution = problem.solution(k, beta, iterations, converged, residual)
    return (solution, history) if trace else solution


def channel_optimize(x, input_dist, *, beta: float | None = None,
                     lam: float | None = None, upsilon: float | None = None,
                     joint_space: JointSpace | None = None,
                     tol: float = BA_TOL, max_iter: int = BA_MAX_ITER,
                     target_tol: float = 1e-8) -> ChannelSolution:
    """Optimize the channel for one target: multiplier, budget, or value.

    Exactly one of ``beta``, ``lam`` (information budget, nats) and
    ``upsilon`` (expected utility) must be given.  Budget and value
    targets run an outer bisection on the multiplier (both quantities
    are nondecreasing in it), warm-starting every inner fixed point from
    the previous output marginal.  Unreachable targets saturate at
    ``beta = 1e6`` and are flagged rather than looped on.
    """
    chosen = [t for t in (beta, lam, upsilon) if t is not None]
    if len(chosen) != 1:
        raise ValueError("specify exactly one of beta, lam, upsilon")
    problem = _ChannelProblem(x, input_dist, joint_space)

    if beta is not None:
        if beta < 0:
            raise InfeasibleError("beta must be >= 0")
        k, _, its, conv, resid, _ = problem.iterate(beta, tol=tol, max_iter=max_iter)
        return problem.solution(k, beta, its, conv, resid)

    if lam is not None and lam < 0:
        raise InfeasibleError("information budget must be >= 0")

    if upsilon is not None:
        col = np.where(np.isfinite(problem.x_live), problem.x_live, 0.0) @ problem.w_b
        col[np.any(np.isneginf(problem.x_live), axis=1)] = -math.inf
        best_letter = int(np.argmax(col))
        ups0 = float(col[best_letter])
        if math.isfinite(ups0) and upsilon <= ups0 + 1e-12:
            # reachable with zero information: independent channel on one letter
            k = np.zeros_like(problem.x_live)
            k[best_letter, :] = 1.0
            return problem.solution(k, 0.0, 0, True, 0.0,
                                    note="target at or below the zero-information value")
        pointwise = float((problem.x_live.max(axis=0) * problem.w_b).sum())
        if upsilon > pointwise + 1e-12:
            raise InfeasibleError(
                f"target value {upsilon} exceeds the pointwise optimum {pointwise}")

    state: dict[str, object] = {"q": None}

    def solve(b: float):
        q0 = state["q"]
        if q0 is not None:
            # keep warm starts strictly interior: a letter whose marginal has
            # underflowed to zero can never re-enter a multiplicative update,
            # which would silently pin the iteration to a boundary fixed point
            q0 = np.maximum(q0, 1e-3 / q0.size)
            q0 = q0 / q0.sum()
        k, q, its, conv, resid, _ = problem.iterate(
            b, q_init=q0, tol=tol, max_iter=max_iter)
        state["q"] = q
        return k, its, conv, resid

    def gap(k: np.ndarray) -> float:
        return (problem.info(k) - lam) if lam is not None \
            else (problem.value(k) - upsilon)

    k, its, conv, resid = solve(0.0)
    if gap(k) >= -target_tol:
        return problem.solution(k, 0.0, its, conv, resid)
    lo, hi = 0.0, 1.0
    k, its, conv, resid = solve(hi)
    while gap(k) < 0.0 and hi < BETA_MAX:
        lo = hi
        hi = min(2.0 * hi, BETA_MAX)
        k, its, conv, resid = solve(hi)
    if gap(k) < -target_tol:
        return problem.solution(k, hi, its, conv, resid, saturated=True,
                                note="target beyond the saturated channel")
    best = (k, hi, its, conv, resid)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        k, its, conv, resid = solve(mid)
        g = gap(k)
        if abs(g) <= target_tol:
            return problem.solution(k, mid, its, conv, resid)
        if g < 0.0:
            lo = mid
        else:
            hi = mid
            best = (k, mid, its, conv, resid)
    return problem.solution(*best)


# ---------------------------------------------------------------------------
# Free energy of translation-invariant kernels on a 1-D grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Uniform midpoint grid on [-extent, extent]."""

    extent: float
    points: int = 10_000

    def cells(self) -> tuple[np.ndarray, float]:
        step = 2.0 * self.extent / self.points
        mids = -self.extent + step * (np.arange(self.points) + 0.5)
        return mids, step


@dataclass(frozen=True, eq=False)
class FreeEnergyReport:
    psi0: float
    dpsi0: float
    info: float | None
    beta: float


def free_energy(gap_utility: Callable[[np.ndarray], np.ndarray], beta: float,
                grid: GridSpec | None = None,
                entropy_b: float | None = None) -> FreeEnergyReport:
    """Log partition sum of a translation-invariant tilt and its derivative.

    ``gap_utility`` maps the offset d = a - b to the utility x(d).  The
    log partition sum ``psi0 = ln sum e^{beta x(d)} dd`` is discretized
    on the grid (default extent ``10 beta^{-1/2}``, 1e4 points); its
    derivative is a central difference with step ``1e-5 beta``; with a
    caller-supplied source entropy the communicated information is
    ``beta psi0' - psi0 + H``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if grid is None:
        grid = GridSpec(extent=10.0 / math.sqrt(beta))
    mids, step = grid.cells()
    phi = np.asarray(gap_utility(mids), dtype=float)
    if max(phi[0], phi[-1]) >= phi.max() - 1e-12:
        # the tilt is maximal at the truncation edge: the integral diverges
        raise ValueError("partition sum dominated by the grid boundary; "
                         "the truncated integral does not converge")

    def psi(b: float) -> float:
        expo = b * phi
        m = expo.max()
        return float(m + math.log(np.exp(expo - m).sum()) + math.log(step))

    psi0 = psi(beta)
    h = 1e-5 * beta
    dpsi0 = (psi(beta + h) - psi(beta - h)) / (2.0 * h)
    info = None
    if entropy_b is not None:
        info = beta * dpsi0 - psi0 + entropy_b
    return FreeEnergyReport(psi0=psi0, dpsi0=dpsi0, info=info, beta=beta)
