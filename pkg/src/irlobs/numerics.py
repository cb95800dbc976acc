"""Shared numerical kernels.

Fixed-step integration, quadrature over uniformly sampled signals, a
continuous-time algebraic Riccati solver, least squares and condition
numbers.  Nothing in this module knows about plants, observers or costs;
everything operates on plain numpy arrays.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla
from scipy.signal import place_poles

from .errors import (
    NumericOverflowError,
    RankDeficiencyError,
    SolverFailureError,
    WindowUnderflowError,
)

_GRID_TOL = 1e-6  # fraction of dt tolerated when matching sample times


def rk4_step(f, t, x, dt):
    """Advance x by one classical 4th-order Runge-Kutta step of size dt.

    f maps (t, x) to dx/dt.  Local error is O(dt^5).  Raises
    NumericOverflowError if the update produces non-finite entries.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + (0.5 * dt) * k1)
    k3 = f(t + 0.5 * dt, x + (0.5 * dt) * k2)
    k4 = f(t + dt, x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError(f"RK4 step at t={t} produced a non-finite state")
    return out


class SampledSignal:
    """Uniformly sampled vector signal with a bounded retention window.

    Samples are appended one grid step at a time (single writer).  The
    signal retains at least ``window`` seconds of history; lookups and
    integrals anywhere inside the retained window operate on the exact
    piecewise-linear interpolant of the samples, so integral additivity
    holds to machine precision.  A cumulative integral is maintained
    alongside the samples to keep sliding-window integrals O(1).
    """

    def __init__(self, dim, dt, window, t0=0.0):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if window <= 0.0:
            raise ValueError("window must be positive")
        self.dim = int(dim)
        self.dt = float(dt)
        self.window = float(window)
        cap = max(64, int(window / dt) + 16)
        self._values = np.zeros((cap, self.dim))
        self._cum = np.zeros((cap, self.dim))
        self._head = 0            # storage row of the first retained sample
        self._count = 0           # number of retained samples
        self._t_first = float(t0)  # time of the first retained sample

    @classmethod
    def from_samples(cls, dt, window, t0, values):
        """Bulk-load a signal from consecutive grid samples (rows of values)."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("values must be a nonempty (samples x dim) array")
        if not np.all(np.isfinite(values)):
            raise NumericOverflowError("non-finite samples in bulk load")
        sig = cls(values.shape[1], dt, window, t0=t0)
        count = values.shape[0]
        if count + 1 > sig._values.shape[0]:
            sig._values = np.zeros((count + 16, sig.dim))
            sig._cum = np.zeros((count + 16, sig.dim))
        sig._values[:count] = values
        sig._cum[1:count] = np.cumsum(
            (0.5 * dt) * (values[:-1] + values[1:]), axis=0
        )
        sig._count = count
        sig._t_first = float(t0)
        sig._prune()
        return sig

    def __len__(self):
        return self._count

    @property
    def earliest_time(self):
        if self._count == 0:
            raise WindowUnderflowError("signal has no samples")
        return self._t_first

    @property
    def latest_time(self):
        if self._count == 0:
            raise WindowUnderflowError("signal has no samples")
        return self._t_first + (self._count - 1) * self.dt

    def append(self, t, value):
        """Append the sample for the next grid time."""
        v = np.asarray(value, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"expected a {self.dim}-vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NumericOverflowError(f"non-finite sample at t={t}")
        expected = self._t_first + self._count * self.dt
        if self._count > 0 and abs(t - expected) > _GRID_TOL * self.dt:
            raise ValueError(f"sample at t={t} is off-grid (expected {expected})")
        if self._count == 0:
            self._t_first = float(t)
        if self._head + self._count >= self._values.shape[0]:
            self._compact_or_grow()
        i = self._head + self._count
        self._values[i] = v
        if self._count == 0:
            self._cum[i] = 0.0
        else:
            self._cum[i] = self._cum[i - 1] + (0.5 * self.dt) * (self._values[i - 1] + v)
        self._count += 1
        self._prune()

    def _compact_or_grow(self):
        lo, hi = self._head, self._head + self._count
        if self._count + 1 <= self._values.shape[0] and self._head > 0:
            self._values[: self._count] = self._values[lo:hi]
            self._cum[: self._count] = self._cum[lo:hi]
        else:
            cap = max(2 * self._values.shape[0], self._count + 16)
            values = np.zeros((cap, self.dim))
            cum = np.zeros((cap, self.dim))
            values[: self._count] = self._values[lo:hi]
            cum[: self._count] = self._cum[lo:hi]
            self._values, self._cum = values, cum
        self._head = 0

    def _prune(self):
        # keep one sample beyond the window so lookups at exactly
        # latest - window stay inside the retained range
        keep_from = self.latest_time - self.window - self.dt
        drop = int((keep_from - self._t_first) / self.dt)
        if drop > 0:
            self._head += drop
            self._count -= drop
            self._t_first += drop * self.dt

    def _check_inside(self, t):
        lo, hi = self.earliest_time, self.latest_time
        tol = _GRID_TOL * self.dt
        if t < lo - tol or t > hi + tol:
            raise WindowUnderflowError(f"time {t} outside retained window [{lo}, {hi}]")
        return min(max(t, lo), hi)

    def _locate(self, t):
        """Local sample index left of t and the fractional offset in [0, 1)."""
        t = self._check_inside(t)
        rel = (t - self._t_first) / self.dt
        k = int(rel)
        frac = rel - k
        if frac > 1.0 - _GRID_TOL:
            k += 1
            frac = 0.0
        elif frac < _GRID_TOL:
            frac = 0.0
        if k >= self._count:
            k = self._count - 1
            frac = 0.0
        return k, frac

    def value_at(self, t):
        """Linearly interpolated value at time t inside the retained window."""
        k, frac = self._locate(t)
        row = self._head + k
        if frac == 0.0:
            return self._values[row].copy()
        return (1.0 - frac) * self._values[row] + frac * self._values[row + 1]

    def _cum_at(self, t):
        """Exact cumulative integral of the interpolant at time t."""
        k, frac = self._locate(t)
        row = self._head + k
        if frac == 0.0:
            return self._cum[row].copy()
        v0 = self._values[row]
        v1 = self._values[row + 1]
        vt = (1.0 - frac) * v0 + frac * v1
        return self._cum[row] + (0.5 * frac * self.dt) * (v0 + vt)

    def integral(self, a, b):
        """Integral of the piecewise-linear interpolant over [a, b]."""
        if b < a:
            raise ValueError("integration bounds must satisfy a <= b")
        if a == b:
            return np.zeros(self.dim)
        return self._cum_at(b) - self._cum_at(a)

    def _locate_many(self, times):
        t = np.asarray(times, dtype=float)
        lo, hi = self.earliest_time, self.latest_time
        tol = _GRID_TOL * self.dt
        if np.any(t < lo - tol) or np.any(t > hi + tol):
            raise WindowUnderflowError(
                f"times outside retained window [{lo}, {hi}]"
            )
        rel = (np.clip(t, lo, hi) - self._t_first) / self.dt
        k = np.floor(rel).astype(int)
        frac = rel - k
        snap_up = frac > 1.0 - _GRID_TOL
        k[snap_up] += 1
        frac[snap_up] = 0.0
        frac[frac < _GRID_TOL] = 0.0
        over = k >= self._count
        k[over] = self._count - 1
        frac[over] = 0.0
        return k, frac

    def values_at(self, times):
        """Vectorized value_at over an array of times."""
        k, frac = self._locate_many(times)
        rows = self._head + k
        out = self._values[rows].copy()
        off = frac > 0.0
        if np.any(off):
            f = frac[off, None]
            out[off] = (1.0 - f) * self._values[rows[off]] + f * self._values[rows[off] + 1]
        return out

    def cumulative_at(self, times):
        """Vectorized exact cumulative integral at an array of times."""
        k, frac = self._locate_many(times)
        rows = self._head + k
        out = self._cum[rows].copy()
        off = frac > 0.0
        if np.any(off):
            f = frac[off, None]
            v0 = self._values[rows[off]]
            v1 = self._values[rows[off] + 1]
            vt = (1.0 - f) * v0 + f * v1
            out[off] = self._cum[rows[off]] + (0.5 * self.dt) * f * (v0 + vt)
        return out

    def _grid_range(self, a, b):
        lo = int(np.ceil((a - self._t_first) / self.dt - _GRID_TOL))
        hi = int(np.floor((b - self._t_first) / self.dt + _GRID_TOL))
        return max(lo, 0), min(hi, self._count - 1)

    def grid_samples(self, a, b):
        """Times and values of the grid samples with a <= t <= b."""
        self._check_inside(a)
        self._check_inside(b)
        lo, hi = self._grid_range(a, b)
        times = self._t_first + self.dt * np.arange(lo, hi + 1)
        return times, self._values[self._head + lo : self._head + hi + 1]

    def cumulative_samples(self, a, b):
        """Times and cumulative-integral values at the grid samples in [a, b].

        When a or b fall off-grid the first/last entries hold the exact
        cumulative values at a and b.
        """
        self._check_inside(a)
        self._check_inside(b)
        lo, hi = self._grid_range(a, b)
        if lo > hi:
            # the interval lies inside a single cell
            return np.array([a, b]), np.vstack((self._cum_at(a), self._cum_at(b)))
        times = self._t_first + self.dt * np.arange(lo, hi + 1)
        vals = self._cum[self._head + lo : self._head + hi + 1]
        tol = _GRID_TOL * self.dt
        if a < times[0] - tol:
            times = np.concatenate(([a], times))
            vals = np.vstack((self._cum_at(a), vals))
        if b > times[-1] + tol:
            times = np.concatenate((times, [b]))
            vals = np.vstack((vals, self._cum_at(b)))
        return times, vals


def linear_rk4_matrices(a, b, h):
    """One-step RK4 matrices for xdot = A x + B u(t) with step h.

    Returns (phi, w0, wh, w1) such that the classical RK4 update is
    x+ = phi x + w0 u(t) + wh u(t + h/2) + w1 u(t + h).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    eye = np.eye(a.shape[0])
    a2 = a @ a
    a3 = a2 @ a
    a4 = a3 @ a
    phi = eye + h * a + (h**2 / 2) * a2 + (h**3 / 6) * a3 + (h**4 / 24) * a4
    w0 = (h / 6.0) * (eye + h * a + (h**2 / 2) * a2 + (h**3 / 4) * a3) @ b
    wh = (h / 6.0) * (4.0 * eye + 2.0 * h * a + (h**2 / 2) * a2) @ b
    w1 = (h / 6.0) * b
    return phi, w0, wh, w1


def trapezoid(signal, a, b):
    """Composite-trapezoid integral of a SampledSignal over [a, b].

    Endpoints off the sample grid are interpolated linearly; requesting a
    time outside the retained window raises WindowUnderflowError rather
    than extrapolating.
    """
    return signal.integral(a, b)


def _is_hurwitz(a):
    return bool(np.all(np.linalg.eigvals(a).real < 0.0))


def _stabilizing_gain(a, b):
    """A gain K with A - BK Hurwitz, found deterministically."""
    n = a.shape[0]
    if _is_hurwitz(a):
        return np.zeros((b.shape[1], n))
    poles = -1.0 - 0.5 * np.arange(n)
    try:
        res = place_poles(a, b, poles)
    except ValueError as exc:
        raise SolverFailureError(f"could not find a stabilizing gain: {exc}")
    k0 = res.gain_matrix
    if not _is_hurwitz(a - b @ k0):
        raise SolverFailureError("pole placement did not stabilize the pair")
    return k0


def are_residual(a, b, q, r, p):
    """Frobenius norm of A'P + PA - PBR^-1B'P + Q."""
    res = a.T @ p + p @ a - p @ b @ np.linalg.solve(r, b.T @ p) + q
    return float(np.linalg.norm(res, "fro"))


def solve_are(a, b, q, r, tol=1e-13, max_iter=60):
    """Stabilizing solution of A'P + PA - P B R^-1 B' P + Q = 0.

    Kleinman-Newton iteration: from a stabilizing gain, each pass solves the
    Lyapunov equation (A - BK)'P + P(A - BK) = -(Q + K'RK) and refreshes
    K = R^-1 B'P.  Quadratically convergent when (A, B) is stabilizable.

    Raises SolverFailureError (with the final residual attached) when no
    stabilizing gain exists, the iteration stalls, or the verified solution
    violates the residual/symmetry/Hurwitz contract.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n or q.shape != (n, n):
        raise ValueError("inconsistent dimensions for the Riccati data")
    if b.ndim != 2:
        raise ValueError("B must be a matrix")
    if np.any(np.linalg.eigvalsh(0.5 * (r + r.T)) <= 0.0):
        raise ValueError("R must be positive definite")

    k = _stabilizing_gain(a, b)
    p = np.zeros((n, n))
    for _ in range(max_iter):
        acl = a - b @ k
        rhs = -(q + k.T @ r @ k)
        p_next = sla.solve_continuous_lyapunov(acl.T, rhs)
        p_next = 0.5 * (p_next + p_next.T)
        step = np.linalg.norm(p_next - p, "fro")
        p = p_next
        k = np.linalg.solve(r, b.T @ p)
        if step <= tol * max(1.0, np.linalg.norm(p, "fro")):
            break
    else:
        raise SolverFailureError(
            "Kleinman-Newton iteration did not converge",
            residual=are_residual(a, b, q, r, p),
        )

    residual = are_residual(a, b, q, r, p)
    if residual >= 1e-8:
        raise SolverFailureError(
            f"Riccati residual {residual:.3e} exceeds tolerance", residual=residual
        )
    if np.linalg.norm(p - p.T, "fro") >= 1e-10:
        raise SolverFailureError("Riccati solution lost symmetry", residual=residual)
    if not _is_hurwitz(a - b @ np.linalg.solve(r, b.T @ p)):
        raise SolverFailureError("closed loop is not Hurwitz", residual=residual)
    return p


def least_squares(a, b):
    """Minimizer of ||a w - b||_2 via orthogonal (SVD) factorization.

    Requires full column rank; raises RankDeficiencyError carrying the
    numerical rank otherwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < a.shape[1]:
        raise RankDeficiencyError(
            f"system is rank deficient (rank {rank} < {a.shape[1]})", rank=int(rank)
        )
    return sol


def condition_number(a):
    """Ratio of the largest to smallest singular value.

    Returns +inf when the matrix is numerically rank deficient; a zero
    matrix raises ValueError.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("condition_number expects a matrix")
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        raise ValueError("condition number of the zero matrix is undefined")
    cutoff = s[0] * max(a.shape) * np.finfo(float).eps
    if s[-1] <= cutoff:
        return float("inf")
    return float(s[0] / s[-1])


def kron_transpose_apply(v, mvec):
    """Return (v kron I_n)' mvec, i.e. M v where mvec is the column-stacked M."""
    v = np.asarray(v, dtype=float).ravel()
    mvec = np.asarray(mvec, dtype=float).ravel()
    a = v.size
    if a == 0 or mvec.size % a != 0:
        raise ValueError(f"vector of length {mvec.size} is not a stacked (n x {a}) matrix")
    n = mvec.size // a
    return mvec.reshape((n, a), order="F") @ v
