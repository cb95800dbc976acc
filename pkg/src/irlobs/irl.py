"""Inverse reinforcement learning over recorded state-action data.

Quadratic feature construction, inverse Bellman and optimal-controller
rows normalized by the known first control weight, condition-number-driven
data selection for the regression stack, and the least-squares weight
solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficiencyError
from .numerics import least_squares


def quadratic_monomials(dim):
    """All index pairs (i, j) with i <= j: the full quadratic basis."""
    return [(i, j) for i in range(dim) for j in range(i, dim)]


@dataclass
class FeatureBasis:
    """Quadratic monomial features for the value and state-cost parts.

    Each monomial is an index pair (i, j), i <= j, over the 2n-dimensional
    state; the value features carry an analytic gradient rule.
    """

    dim: int
    v_monomials: list
    q_monomials: list

    def __post_init__(self):
        self.v_monomials = [(int(i), int(j)) for i, j in self.v_monomials]
        self.q_monomials = [(int(i), int(j)) for i, j in self.q_monomials]
        for name, monos in (("value", self.v_monomials), ("cost", self.q_monomials)):
            seen = set()
            for i, j in monos:
                if not (0 <= i <= j < self.dim):
                    raise ValueError(f"{name} monomial ({i}, {j}) out of range")
                if (i, j) in seen:
                    raise ValueError(f"duplicate {name} monomial ({i}, {j})")
                seen.add((i, j))

    @classmethod
    def quadratic(cls, dim, q_monomials=None):
        """Full quadratic value basis; squares-only cost basis by default."""
        if q_monomials is None:
            q_monomials = [(i, i) for i in range(dim)]
        return cls(dim=dim, v_monomials=quadratic_monomials(dim), q_monomials=q_monomials)

    @property
    def num_v(self):
        return len(self.v_monomials)

    @property
    def num_q(self):
        return len(self.q_monomials)

    def width(self, m):
        """Stacked unknown count: value + cost + all-but-first R weights."""
        return self.num_v + self.num_q + m - 1


def eval_features(basis, x, u):
    """Evaluate (sigma_V, grad sigma_V, sigma_Q, sigma_u) at (x, u).

    The gradient row of monomial x_i x_j holds x_j at column i and x_i at
    column j (2 x_i at i when i == j).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (basis.dim,):
        raise ValueError(f"x must be a {basis.dim}-vector")
    sigma_v = np.empty(basis.num_v)
    grad = np.zeros((basis.num_v, basis.dim))
    for k, (i, j) in enumerate(basis.v_monomials):
        sigma_v[k] = x[i] * x[j]
        if i == j:
            grad[k, i] = 2.0 * x[i]
        else:
            grad[k, i] = x[j]
            grad[k, j] = x[i]
    sigma_q = np.array([x[i] * x[j] for i, j in basis.q_monomials])
    sigma_u = u * u
    return sigma_v, grad, sigma_q, sigma_u


@dataclass
class WeightVector:
    """Estimated cost/value weights [W_V; W_Q; W_R-minus] with the known r1
    carried along for context (never solved for)."""

    w_v: np.ndarray
    w_q: np.ndarray
    w_r_minus: np.ndarray
    r1: float

    def __post_init__(self):
        self.w_v = np.asarray(self.w_v, dtype=float)
        self.w_q = np.asarray(self.w_q, dtype=float)
        self.w_r_minus = np.asarray(self.w_r_minus, dtype=float)
        if self.r1 <= 0.0:
            raise ValueError("r1 must be positive")
        if not (
            np.all(np.isfinite(self.w_v))
            and np.all(np.isfinite(self.w_q))
            and np.all(np.isfinite(self.w_r_minus))
        ):
            raise ValueError("weight entries must be finite")

    @property
    def stacked(self):
        return np.concatenate([self.w_v, self.w_q, self.w_r_minus])

    @classmethod
    def from_stacked(cls, vec, num_v, num_q, r1):
        vec = np.asarray(vec, dtype=float)
        return cls(
            w_v=vec[:num_v],
            w_q=vec[num_v : num_v + num_q],
            w_r_minus=vec[num_v + num_q :],
            r1=r1,
        )


def ideal_weights(basis, riccati_p, w_q_star, r_diag):
    """The weight vector the solve should recover on ideal data.

    Value weights read off the Riccati solution (diagonal entries for
    squares, twice the off-diagonals for cross monomials), true state-cost
    weights, and the tail of the R diagonal.
    """
    riccati_p = np.asarray(riccati_p, dtype=float)
    w_v = np.array(
        [riccati_p[i, i] if i == j else 2.0 * riccati_p[i, j] for i, j in basis.v_monomials]
    )
    r_diag = np.asarray(r_diag, dtype=float)
    return WeightVector(
        w_v=w_v, w_q=np.asarray(w_q_star, dtype=float), w_r_minus=r_diag[1:], r1=float(r_diag[0])
    )


def inverse_bellman_row(basis, x_hat, u, theta_hat, r1):
    """One inverse-Bellman regression row and its right-hand side.

    The row multiplies the stacked weights; at true data the residual
    row.W - rhs vanishes because the optimal pair satisfies the HJB
    equation, with rhs = -r1 u1^2 carrying the known-scale normalization.
    """
    u = np.asarray(u, dtype=float)
    _, grad, sigma_q, sigma_u = eval_features(basis, x_hat, u)
    xdot = theta_hat.a_prime @ np.asarray(x_hat, dtype=float) + theta_hat.b_prime @ u
    row = np.concatenate([grad @ xdot, sigma_q, sigma_u[1:]])
    rhs = -r1 * sigma_u[0]
    return row, rhs


def controller_rows(basis, x_hat, u, theta_hat, r1):
    """Stationarity rows of the optimal controller, one per input channel.

    Row i carries (B-hat)' grad sigma_V over the value weights; the first
    channel moves the known -2 r1 u1 to the right-hand side while channels
    2..m keep 2 u_i against their unknown R weight.
    """
    u = np.asarray(u, dtype=float)
    m = u.size
    _, grad, _, _ = eval_features(basis, x_hat, u)
    sigma_b = theta_hat.b_prime.T @ grad.T  # m x num_v
    rows = np.zeros((m, basis.width(m)))
    rows[:, : basis.num_v] = sigma_b
    rhs = np.zeros(m)
    rhs[0] = -2.0 * r1 * u[0]
    for i in range(1, m):
        rows[i, basis.num_v + basis.num_q + i - 1] = 2.0 * u[i]
    return rows, rhs


def entry_rows(basis, x_hat, u, theta_hat, r1):
    """Full (1+m)-row block of one data point: the inverse-Bellman row
    stacked over the controller rows, sharing one feature evaluation."""
    x_hat = np.asarray(x_hat, dtype=float)
    u = np.asarray(u, dtype=float)
    m = u.size
    num_v, num_q = basis.num_v, basis.num_q
    _, grad, sigma_q, sigma_u = eval_features(basis, x_hat, u)
    rows = np.zeros((1 + m, basis.width(m)))
    rhs = np.zeros(1 + m)
    xdot = theta_hat.a_prime @ x_hat + theta_hat.b_prime @ u
    rows[0, :num_v] = grad @ xdot
    rows[0, num_v : num_v + num_q] = sigma_q
    rows[0, num_v + num_q :] = sigma_u[1:]
    rhs[0] = -r1 * sigma_u[0]
    rows[1:, :num_v] = theta_hat.b_prime.T @ grad.T
    rhs[1] = -2.0 * r1 * u[0]
    for i in range(1, m):
        rows[1 + i, num_v + num_q + i - 1] = 2.0 * u[i]
    return rows, rhs


@dataclass
class Candidate:
    """A state-action pair offered to the history stack, with the parameter
    estimate in force and the estimator-quality score at recording time."""

    x: np.ndarray
    u: np.ndarray
    theta: object  # ThetaVector
    eta: float
    t: float


class _Entry:
    __slots__ = ("rows", "rhs", "eta", "t", "gram", "rhs_sq")

    def __init__(self, rows, rhs, eta, t):
        self.rows = rows
        self.rhs = rhs
        self.eta = eta
        self.t = t
        self.gram = rows.T @ rows
        self.rhs_sq = float(rhs @ rhs)


def _gram_stats(gram):
    """(condition number of the stacked matrix, its Gram condition number)."""
    lam = np.linalg.eigvalsh(gram)
    lo, hi = float(lam[0]), float(lam[-1])
    if hi <= 0.0:
        return float("inf"), float("inf")
    cutoff = hi * gram.shape[0] * np.finfo(float).eps
    if lo <= cutoff:
        return float("inf"), float("inf")
    return float(np.sqrt(hi / lo)), float(hi / lo)


class IrlHistoryStack:
    """Recorded feature-row blocks forming the weight regression.

    Each entry contributes one inverse-Bellman row plus one controller row
    per input channel.  The stacked-matrix condition number and the norm of
    the known right-hand side are kept current after every mutation.
    """

    def __init__(self, capacity, basis, r1, m, xi2=1e-3):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = int(capacity)
        self.basis = basis
        self.r1 = float(r1)
        self.m = int(m)
        self.xi2 = float(xi2)
        self.width = basis.width(m)
        self._entries = []
        self.gram = np.zeros((self.width, self.width))
        self._gram_blocks = np.zeros((0, self.width, self.width))
        self.kappa = float("inf")
        self.gram_kappa = float("inf")
        self._rhs_sq = 0.0

    @property
    def size(self):
        return len(self._entries)

    @property
    def is_full(self):
        return self.size >= self.capacity

    @property
    def sigma_u1_norm(self):
        """Norm of the stacked known right-hand side."""
        return float(np.sqrt(self._rhs_sq))

    @property
    def eta_min(self):
        """Best (smallest) stored quality score; +inf when empty."""
        if not self._entries:
            return float("inf")
        return min(e.eta for e in self._entries)

    @property
    def sigma_matrix(self):
        if not self._entries:
            return np.zeros((0, self.width))
        return np.vstack([e.rows for e in self._entries])

    @property
    def rhs_vector(self):
        if not self._entries:
            return np.zeros(0)
        return np.concatenate([e.rhs for e in self._entries])

    @property
    def timestamps(self):
        return [e.t for e in self._entries]

    def build_entry(self, cand):
        rows, rhs = entry_rows(self.basis, cand.x, cand.u, cand.theta, self.r1)
        return _Entry(rows, rhs, cand.eta, cand.t)

    def _refresh(self):
        if self._entries:
            self._gram_blocks = np.stack([e.gram for e in self._entries])
            self.gram = self._gram_blocks.sum(axis=0)
            self._rhs_sq = float(sum(e.rhs_sq for e in self._entries))
            self.kappa, self.gram_kappa = _gram_stats(self.gram)
        else:
            self._gram_blocks = np.zeros((0, self.width, self.width))
            self.gram = np.zeros((self.width, self.width))
            self._rhs_sq = 0.0
            self.kappa = self.gram_kappa = float("inf")

    def clear(self):
        self._entries = []
        self._refresh()

    def _append(self, entry):
        self._entries.append(entry)
        self._refresh()

    def _replace(self, i, entry):
        self._entries[i] = entry
        self._refresh()


def data_select(stack, candidate, xi1, xi2):
    """Offer a candidate to the stack per the condition-number selection rule.

    Appends unconditionally while the stack is not full.  Once full, finds
    the swap that best conditions the stacked matrix and commits it only if
    the Gram condition number improves by the factor xi1 while the known
    right-hand side keeps norm at least xi2.  Returns 1 if stored, else 0.
    """
    entry = stack.build_entry(candidate)
    if not np.all(np.isfinite(entry.rows)) or not np.all(np.isfinite(entry.rhs)):
        raise ValueError("candidate produced non-finite regression rows")
    if not stack.is_full:
        stack._append(entry)
        return 1
    swapped = (stack.gram + entry.gram)[None, :, :] - stack._gram_blocks
    lam = np.linalg.eigvalsh(swapped)
    lo, hi = lam[:, 0], lam[:, -1]
    cutoff = hi * stack.width * np.finfo(float).eps
    with np.errstate(divide="ignore", invalid="ignore"):
        gram_kappas = np.where((hi > 0.0) & (lo > cutoff), hi / lo, np.inf)
    best_i = int(np.argmin(gram_kappas))
    best_gram_kappa = float(gram_kappas[best_i])
    rhs_sq_new = stack._rhs_sq - stack._entries[best_i].rhs_sq + entry.rhs_sq
    # the tiny relative margin keeps float-noise ties from passing the
    # strict improvement test
    if (
        best_gram_kappa < xi1 * stack.gram_kappa * (1.0 - 1e-12)
        and np.sqrt(max(rhs_sq_new, 0.0)) >= xi2
    ):
        stack._replace(best_i, entry)
        return 1
    return 0


def solve_weights(stack):
    """Least-squares weight estimate from the stacked regression.

    Requires the stacked matrix to have full column rank; raises
    RankDeficiencyError otherwise so the caller can hold the previous
    estimate.
    """
    if stack.size == 0:
        raise RankDeficiencyError("history stack is empty", rank=0)
    sol = least_squares(stack.sigma_matrix, stack.rhs_vector)
    return WeightVector.from_stacked(sol, stack.basis.num_v, stack.basis.num_q, stack.r1)
