"""Shared fixtures: the default linear-quadratic system, a prerecorded
parameter stack, and a fully logged estimator run used across test modules."""

from dataclasses import dataclass

import numpy as np
import pytest

from irlobs.estimator import (
    AdaptiveObserver,
    EstimatorGains,
    ParamHistoryStack,
    theta_dim,
)
from irlobs.experiment import default_config, prerecord_param_stack
from irlobs.numerics import SampledSignal, rk4_step
from irlobs.plant import (
    CostFunction,
    LinearPlant,
    closed_loop_field,
    make_demonstrator,
    optimal_action,
)

DEFAULT_A = np.array([[1.0, 1.0, -1.0, 1.0], [5.0, 1.0, 1.0, 1.0]])
DEFAULT_B = np.array([[1.0, 3.0], [0.0, 1.0]])
DEFAULT_WQ = np.array([1.0, 2.0, 3.0, 6.0])
DEFAULT_RDIAG = np.array([20.0, 10.0])
X0 = np.array([2.0, -2.0, 1.0, -1.0])


def default_gains():
    return EstimatorGains(
        k_theta=0.3 / 150, beta1=5.0, alpha=20.0, beta=10.0, k=100.0, t1=1.0, t2=0.8
    )


def hamiltonian_are(a, b, q, r):
    """Independent Riccati oracle from the stable Hamiltonian eigenspace."""
    n = a.shape[0]
    ham = np.block([[a, -b @ np.linalg.solve(r, b.T)], [-q, -a.T]])
    vals, vecs = np.linalg.eig(ham)
    stable = vecs[:, vals.real < 0.0]
    x = stable[:n, :]
    y = stable[n:, :]
    p = np.real(y @ np.linalg.inv(x))
    return 0.5 * (p + p.T)


def cumulative_trapezoid(y, dt):
    """Cumulative composite-trapezoid values of a sampled series."""
    out = np.zeros_like(np.asarray(y, dtype=float))
    out[1:] = np.cumsum(0.5 * dt * (y[:-1] + y[1:]), axis=0)
    return out


@pytest.fixture(scope="session")
def default_system():
    plant = LinearPlant(a=DEFAULT_A.copy(), b=DEFAULT_B.copy())
    cost = CostFunction(dim=4, w_q=DEFAULT_WQ.copy(), r_diag=DEFAULT_RDIAG.copy())
    demo = make_demonstrator(plant, cost)
    return plant, cost, demo


@pytest.fixture(scope="session")
def double_integrator():
    plant = LinearPlant(a=np.array([[0.0, 0.0]]), b=np.array([[1.0]]))
    cost = CostFunction(dim=2, w_q=np.array([1.0, 1.0]), r_diag=np.array([1.0]))
    demo = make_demonstrator(plant, cost)
    return plant, cost, demo


@pytest.fixture(scope="session")
def prerecorded_stack(default_system):
    _, _, demo = default_system
    stack = ParamHistoryStack(capacity=150, dim=theta_dim(2, 2), min_eig_threshold=1e-3)
    prerecord_param_stack(demo, default_config(), stack)
    return stack


@dataclass
class EstimatorRun:
    """Complete logs of a closed-loop run with the estimator attached."""

    dt: float
    gains: EstimatorGains
    times: np.ndarray
    x_true: np.ndarray
    u: np.ndarray
    p_hat: np.ndarray
    q_hat: np.ndarray
    eta: np.ndarray
    nu: np.ndarray
    p_tilde: np.ndarray
    theta: np.ndarray
    theta_rate: np.ndarray
    gamma_eigs: np.ndarray
    p_log: SampledSignal
    u_log: SampledSignal
    theta_true: np.ndarray
    stack: ParamHistoryStack

    @property
    def q_true(self):
        n = self.p_hat.shape[1]
        return self.x_true[:, n:]

    @property
    def q_tilde(self):
        return self.q_true - self.q_hat

    @property
    def theta_tilde(self):
        return self.theta_true[None, :] - self.theta


def drive_estimator(
    demo,
    duration,
    dt,
    stack,
    gains=None,
    x0=X0,
    theta0=None,
    q_hat0=None,
    record_stride=0,
    update_parameters=True,
):
    """Run the demonstrator with the estimator attached, logging everything.

    record_stride > 0 also feeds the error-system pairs into the stack as
    the run progresses (the stack is mutated).
    """
    plant = demo.plant
    n, m = plant.n, plant.m
    gains = gains or default_gains()
    field = closed_loop_field(demo)
    steps = int(round(duration / dt))
    x = np.asarray(x0, dtype=float).copy()
    u = optimal_action(demo, x)
    p_log = SampledSignal(n, dt, window=duration + dt)
    u_log = SampledSignal(m, dt, window=duration + dt)
    p_log.append(0.0, x[:n])
    u_log.append(0.0, u)
    obs = AdaptiveObserver(
        n, m, p0=x[:n], u0=u, gains=gains, theta0=theta0, q_hat0=q_hat0
    )
    logs = {
        "x": [x.copy()], "u": [u.copy()], "p_hat": [obs.p_hat.copy()],
        "q_hat": [obs.q_hat.copy()], "eta": [obs.eta.copy()], "nu": [obs.nu.copy()],
        "p_tilde": [obs.p_tilde.copy()], "theta": [obs.theta.copy()],
        "theta_rate": [obs.theta_rate.copy()],
    }
    gamma_eigs = [np.linalg.eigvalsh(obs.gamma)[[0, -1]]]
    for k in range(steps):
        x = rk4_step(field, k * dt, x, dt)
        t = (k + 1) * dt
        u = optimal_action(demo, x)
        p_log.append(t, x[:n])
        u_log.append(t, u)
        if record_stride and t >= gains.t1 + gains.t2 and (k + 1) % record_stride == 0:
            from irlobs.estimator import integral_regressor, integral_residual

            stack.record(
                integral_residual(p_log, t, gains.t1, gains.t2),
                integral_regressor(p_log, u_log, t, gains.t1, gains.t2),
            )
        if update_parameters:
            obs.update_parameters(stack, dt)
        obs.step(x[:n], u, dt)
        for key, val in (
            ("x", x), ("u", u), ("p_hat", obs.p_hat), ("q_hat", obs.q_hat),
            ("eta", obs.eta), ("nu", obs.nu), ("p_tilde", obs.p_tilde),
            ("theta", obs.theta), ("theta_rate", obs.theta_rate),
        ):
            logs[key].append(val.copy())
        gamma_eigs.append(np.linalg.eigvalsh(obs.gamma)[[0, -1]])
    return EstimatorRun(
        dt=dt,
        gains=gains,
        times=dt * np.arange(steps + 1),
        x_true=np.asarray(logs["x"]),
        u=np.asarray(logs["u"]),
        p_hat=np.asarray(logs["p_hat"]),
        q_hat=np.asarray(logs["q_hat"]),
        eta=np.asarray(logs["eta"]),
        nu=np.asarray(logs["nu"]),
        p_tilde=np.asarray(logs["p_tilde"]),
        theta=np.asarray(logs["theta"]),
        theta_rate=np.asarray(logs["theta_rate"]),
        gamma_eigs=np.asarray(gamma_eigs),
        p_log=p_log,
        u_log=u_log,
        theta_true=plant.theta,
        stack=stack,
    )


@pytest.fixture(scope="session")
def default_run(default_system, prerecorded_stack):
    """A 12 s fully logged run on the default system with the prerecorded
    stack; shared read-only by estimator and purge tests."""
    _, _, demo = default_system
    import copy

    stack = copy.deepcopy(prerecorded_stack)
    return drive_estimator(demo, duration=12.0, dt=1e-3, stack=stack, record_stride=10)
