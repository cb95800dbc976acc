"""Experiment configuration, the end-to-end runner and report writing.

Wires demonstrator -> estimator -> cost recovery -> purge policy on a
common measurement clock, in observed or query mode, and emits CSV/JSON
reports.  The estimator and recovery path see only the measured position
and input; ground truth is touched exclusively for report columns.
"""

from __future__ import annotations

import copy
import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericOverflowError
from .estimator import (
    AdaptiveObserver,
    EstimatorGains,
    ParamHistoryStack,
    integral_regressor,
    integral_residual,
    theta_dim,
)
from .irl import (
    Candidate,
    FeatureBasis,
    IrlHistoryStack,
    WeightVector,
    data_select,
    ideal_weights,
)
from .numerics import SampledSignal, linear_rk4_matrices, rk4_step
from .plant import (
    CostFunction,
    LinearPlant,
    closed_loop_field,
    make_demonstrator,
    optimal_action,
    query,
)
from .purge import (
    PurgeState,
    QualityConfig,
    purge_policy,
    quality_eta1,
    quality_eta2,
    smooth_velocity,
)

MODES = ("observed", "query")
STACK_SOURCES = ("prerecorded", "online")


def default_config_dict():
    """The shipped default experiment as a plain dictionary."""
    return {
        "plant": {
            "a": [[1.0, 1.0, -1.0, 1.0], [5.0, 1.0, 1.0, 1.0]],
            "b": [[1.0, 3.0], [0.0, 1.0]],
        },
        "cost": {
            "w_q": [1.0, 2.0, 3.0, 6.0],
            "r_diag": [20.0, 10.0],
            "q_monomials": None,
        },
        "gains": {
            "k": 100.0,
            "alpha": 20.0,
            "beta": 10.0,
            "beta1": 5.0,
            "k_theta": None,
            "capacity": 150,
            "t1": 1.0,
            "t2": 0.8,
            "gamma0": 0.1,
            "min_eig_threshold": 1e-3,
            "record_stride": 10,
            "stack_source": "prerecorded",
            "excitation_duration": 6.0,
            "excitation_dt": 2e-4,
            "excitation_stride": 50,
            "excitation_amplitude": 1.0,
        },
        "irl": {
            "capacity": 30,
            "xi1": 1.0,
            "xi2": 1e-3,
            "v_monomials": None,
        },
        "purge": {
            "horizon": 1.0,
            "half_width": 5,
            "s1": None,
            "s2": None,
            "kappa1_bar": 1e6,
            "kappa2_bar": 1e6,
            "rollout_stride": 20,
        },
        "run": {
            "x0": [2.0, -2.0, 1.0, -1.0],
            "duration": 30.0,
            "dt": 1e-3,
            "seed": 0,
            "mode": "query",
            "query_low": [-2.0, -2.0, -2.0, -2.0],
            "query_high": [2.0, 2.0, 2.0, 2.0],
            "report_stride": 10,
            "w0": None,
        },
    }


def _merge(base, override, path=""):
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"unknown config field '{path}{key}'")
        if isinstance(base[key], dict) and isinstance(val, dict):
            _merge(base[key], val, path=f"{path}{key}.")
        else:
            base[key] = val
    return base


def _require_positive(section, name, value):
    if not isinstance(value, (int, float)) or value <= 0:
        raise ConfigError(f"field '{section}.{name}' must be positive, got {value!r}")
    return float(value)


class ExperimentConfig:
    """Validated experiment configuration; see default_config_dict for the
    schema and the shipped defaults."""

    def __init__(self, raw):
        self.raw = copy.deepcopy(raw)
        self._validate()

    def to_dict(self):
        return copy.deepcopy(self.raw)

    def _validate(self):
        d = self.raw
        try:
            a = np.asarray(d["plant"]["a"], dtype=float)
            b = np.asarray(d["plant"]["b"], dtype=float)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"field 'plant.a'/'plant.b' malformed: {exc}")
        if a.ndim != 2 or a.shape[1] != 2 * a.shape[0]:
            raise ConfigError(f"field 'plant.a' must be n x 2n, got {a.shape}")
        n = a.shape[0]
        if b.ndim != 2 or b.shape[0] != n:
            raise ConfigError(f"field 'plant.b' must be {n} x m, got {b.shape}")
        m = b.shape[1]
        self.n, self.m = n, m

        cost = d["cost"]
        w_q = np.asarray(cost["w_q"], dtype=float)
        r_diag = np.asarray(cost["r_diag"], dtype=float)
        if r_diag.ndim != 1 or r_diag.size != m:
            raise ConfigError(f"field 'cost.r_diag' must have length {m}")
        if np.any(r_diag <= 0):
            raise ConfigError("field 'cost.r_diag' entries must be positive")
        monos = cost.get("q_monomials")
        if monos is not None:
            if len(monos) != w_q.size:
                raise ConfigError("field 'cost.q_monomials' length must match 'cost.w_q'")
            for pair in monos:
                i, j = int(pair[0]), int(pair[1])
                if not (0 <= i <= j < 2 * n):
                    raise ConfigError(f"field 'cost.q_monomials' pair ({i}, {j}) out of range")
        elif w_q.size != 2 * n:
            raise ConfigError(
                f"field 'cost.w_q' must have length {2 * n} for the default square basis"
            )

        g = d["gains"]
        for name in ("k", "alpha", "beta", "beta1", "t1", "t2", "gamma0",
                     "min_eig_threshold", "excitation_duration", "excitation_dt",
                     "excitation_amplitude"):
            _require_positive("gains", name, g[name])
        for name in ("capacity", "record_stride", "excitation_stride"):
            if int(g[name]) < 1:
                raise ConfigError(f"field 'gains.{name}' must be a positive integer")
        if g["k_theta"] is not None:
            _require_positive("gains", "k_theta", g["k_theta"])
        if g["stack_source"] not in STACK_SOURCES:
            raise ConfigError(f"field 'gains.stack_source' must be one of {STACK_SOURCES}")

        irl = d["irl"]
        if int(irl["capacity"]) < 1:
            raise ConfigError("field 'irl.capacity' must be a positive integer")
        if irl["xi1"] < 0:
            raise ConfigError("field 'irl.xi1' must be nonnegative")
        _require_positive("irl", "xi2", irl["xi2"])
        if irl.get("v_monomials") is not None:
            for pair in irl["v_monomials"]:
                i, j = int(pair[0]), int(pair[1])
                if not (0 <= i <= j < 2 * n):
                    raise ConfigError(f"field 'irl.v_monomials' pair ({i}, {j}) out of range")

        p = d["purge"]
        _require_positive("purge", "horizon", p["horizon"])
        if int(p["half_width"]) < 1:
            raise ConfigError("field 'purge.half_width' must be a positive integer")
        if int(p["rollout_stride"]) < 1:
            raise ConfigError("field 'purge.rollout_stride' must be a positive integer")
        _require_positive("purge", "kappa1_bar", p["kappa1_bar"])
        _require_positive("purge", "kappa2_bar", p["kappa2_bar"])
        for name, dim in (("s1", 2 * n), ("s2", n)):
            if p[name] is not None:
                s = np.asarray(p[name], dtype=float)
                if s.shape != (dim, dim):
                    raise ConfigError(f"field 'purge.{name}' must be {dim} x {dim}")

        r = d["run"]
        x0 = np.asarray(r["x0"], dtype=float)
        if x0.shape != (2 * n,):
            raise ConfigError(f"field 'run.x0' must have length {2 * n}")
        if r["duration"] < 0:
            raise ConfigError("field 'run.duration' must be nonnegative")
        _require_positive("run", "dt", r["dt"])
        if 0 < r["duration"] <= g["t1"] + g["t2"]:
            raise ConfigError("field 'run.duration' must exceed gains.t1 + gains.t2")
        if r["mode"] not in MODES:
            raise ConfigError(f"field 'run.mode' must be one of {MODES}")
        for name in ("query_low", "query_high"):
            box = np.asarray(r[name], dtype=float)
            if box.shape != (2 * n,):
                raise ConfigError(f"field 'run.{name}' must have length {2 * n}")
        if np.any(np.asarray(r["query_low"], float) > np.asarray(r["query_high"], float)):
            raise ConfigError("field 'run.query_low' must not exceed 'run.query_high'")
        if int(r["report_stride"]) < 1:
            raise ConfigError("field 'run.report_stride' must be a positive integer")
        if int(r["seed"]) < 0:
            raise ConfigError("field 'run.seed' must be a nonnegative integer")
        if r["w0"] is not None:
            v_count = len(irl["v_monomials"]) if irl.get("v_monomials") is not None else n * (2 * n + 1)
            q_count = len(monos) if monos is not None else 2 * n
            width = v_count + q_count + m - 1
            if np.asarray(r["w0"], dtype=float).shape != (width,):
                raise ConfigError(f"field 'run.w0' must have length {width}")
        horizon = p["horizon"]
        if horizon < (2 * int(p["half_width"]) + 1) * r["dt"]:
            raise ConfigError("field 'purge.horizon' is shorter than the smoothing window")
        steps = int(round(horizon / (int(p["rollout_stride"]) * r["dt"])))
        if steps < 1 or abs(steps * int(p["rollout_stride"]) * r["dt"] - horizon) > 1e-9:
            raise ConfigError(
                "field 'purge.horizon' must be a multiple of rollout_stride * run.dt"
            )

    # -- section accessors (numpy views over the validated raw dict) -----

    def plant(self):
        return LinearPlant(a=np.asarray(self.raw["plant"]["a"], float),
                           b=np.asarray(self.raw["plant"]["b"], float))

    def cost(self):
        c = self.raw["cost"]
        return CostFunction(
            dim=2 * self.n,
            w_q=np.asarray(c["w_q"], float),
            r_diag=np.asarray(c["r_diag"], float),
            q_monomials=c["q_monomials"],
        )

    def gains(self):
        g = self.raw["gains"]
        k_theta = g["k_theta"]
        if k_theta is None:
            k_theta = 0.3 / int(g["capacity"])
        return EstimatorGains(
            k_theta=float(k_theta), beta1=float(g["beta1"]), alpha=float(g["alpha"]),
            beta=float(g["beta"]), k=float(g["k"]), t1=float(g["t1"]), t2=float(g["t2"]),
        )

    def basis(self):
        from .irl import quadratic_monomials

        irl = self.raw["irl"]
        v_monos = irl["v_monomials"]
        if v_monos is None:
            v_monos = quadratic_monomials(2 * self.n)
        q_monos = self.raw["cost"]["q_monomials"]
        if q_monos is None:
            q_monos = [(i, i) for i in range(2 * self.n)]
        return FeatureBasis(dim=2 * self.n, v_monomials=v_monos, q_monomials=q_monos)

    def quality(self):
        p = self.raw["purge"]
        s1 = p["s1"] if p["s1"] is not None else np.eye(2 * self.n)
        s2 = p["s2"] if p["s2"] is not None else np.eye(self.n)
        return QualityConfig(
            horizon=float(p["horizon"]), s1=np.asarray(s1, float), s2=np.asarray(s2, float),
            half_width=int(p["half_width"]), rollout_stride=int(p["rollout_stride"]),
        )


def default_config():
    return ExperimentConfig(default_config_dict())


def load_config(path):
    """Load a JSON config file; unspecified fields take the shipped defaults."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    merged = _merge(default_config_dict(), data)
    return ExperimentConfig(merged)


@dataclass
class RunTrace:
    """Gate-level evidence collected during a run.

    stores:          (t, branch, gram_kappa_before, gram_kappa_after, u1_norm_after)
    weight_updates:  (t, varpi, gram_kappa, u1_norm)  -- every change of the estimate
    purges:          (t, gram_kappa, eta_now, eta_bar_before)
    """

    stores: list = field(default_factory=list)
    weight_updates: list = field(default_factory=list)
    purges: list = field(default_factory=list)


@dataclass
class RunReport:
    """Time series of the estimation errors plus run-level diagnostics."""

    t: np.ndarray
    p_tilde: np.ndarray
    q_tilde: np.ndarray
    theta_tilde: np.ndarray
    w_tilde: np.ndarray
    purge_count: int
    queries: int
    final_kappa: float
    final_gram_kappa: float
    final_residual: float
    gamma_eig_min: float
    gamma_eig_max: float
    w_true: np.ndarray
    w_final: np.ndarray
    wall_clock_seconds: float
    trace: RunTrace
    config: dict

    def norms(self, name):
        series = getattr(self, name)
        if series.shape[0] == 0:
            return np.zeros(0)
        return np.linalg.norm(series, axis=1)


def _excitation(times, m, amplitude):
    """Deterministic multisine dither, distinct across input channels."""
    t = np.atleast_1d(np.asarray(times, dtype=float))[:, None]
    i = np.arange(m)[None, :]
    return amplitude * (
        np.sin((0.7 + 0.6 * i) * t + 0.5 + 0.2 * i)
        + np.sin((1.9 + 0.7 * i) * t + 1.7 + 0.3 * i)
        + np.sin((3.7 + 0.8 * i) * t + 0.9 + 0.4 * i)
    )


def prerecord_param_stack(demo, cfg, stack):
    """Fill the parameter history stack from an excited calibration maneuver.

    Along a pure feedback trajectory the input window integrals are an
    exact linear image of the position window integrals, so the regressor
    Gram can never reach full rank; the stack is therefore recorded from a
    run with a deterministic dither on top of the optimal policy, standing
    in for rich data gathered before observation starts.
    """
    g = cfg.raw["gains"]
    plant = demo.plant
    n, m = plant.n, plant.m
    dt = float(g["excitation_dt"])
    duration = float(g["excitation_duration"])
    t1, t2 = float(g["t1"]), float(g["t2"])
    if duration <= t1 + t2:
        raise ConfigError("field 'gains.excitation_duration' must exceed t1 + t2")
    amp = float(g["excitation_amplitude"])
    stride = int(g["excitation_stride"])
    steps = int(round(duration / dt))

    # closed loop driven by the dither is linear time-invariant, so one set
    # of RK4 step matrices advances the whole calibration trajectory
    a_cl = plant.a_prime - plant.b_prime @ demo.k_fb
    phi, w0, wh, w1 = linear_rk4_matrices(a_cl, plant.b_prime, dt)
    dither_half = _excitation((0.5 * dt) * np.arange(2 * steps + 1), m, amp)
    drive = dither_half[0:-1:2] @ w0.T + dither_half[1::2] @ wh.T + dither_half[2::2] @ w1.T
    states = np.empty((steps + 1, 2 * n))
    states[0] = np.asarray(cfg.raw["run"]["x0"], dtype=float)
    x = states[0]
    for k in range(steps):
        x = phi @ x + drive[k]
        states[k + 1] = x
    if not np.all(np.isfinite(states)):
        raise NumericOverflowError("calibration run diverged")
    inputs = states @ (-demo.k_fb.T) + dither_half[0::2]

    window = duration + dt
    p_log = SampledSignal.from_samples(dt, window, 0.0, states[:, :n])
    u_log = SampledSignal.from_samples(dt, window, 0.0, inputs)
    first = int(np.ceil((t1 + t2) / dt - 1e-9))
    for k in range(first, steps + 1):
        if k % stride == 0:
            t = k * dt
            stack.record(
                integral_residual(p_log, t, t1, t2),
                integral_regressor(p_log, u_log, t, t1, t2),
            )
    return stack


def run_experiment(cfg, mode=None, seed=None):
    """Run the full pipeline on a common clock and return the report.

    Per grid step: advance the demonstrator, feed (p, u) to the estimator,
    score the estimate quality, offer the estimated pair (plus one oracle
    query per step in query mode) to the history stack, and apply the
    weight-update/purge policy after each offer.  Deterministic for a
    fixed config and seed.
    """
    t_start = time.perf_counter()
    raw = cfg.to_dict()
    if mode is not None:
        raw["run"]["mode"] = mode
    if seed is not None:
        raw["run"]["seed"] = int(seed)
    cfg = ExperimentConfig(raw)

    n, m = cfg.n, cfg.m
    plant = cfg.plant()
    cost = cfg.cost()
    demo = make_demonstrator(plant, cost)
    gains = cfg.gains()
    basis = cfg.basis()
    quality = cfg.quality()
    run = cfg.raw["run"]
    g = cfg.raw["gains"]
    irl_cfg = cfg.raw["irl"]

    dt = float(run["dt"])
    duration = float(run["duration"])
    steps = int(round(duration / dt))
    x0 = np.asarray(run["x0"], dtype=float)
    mode = run["mode"]
    rng = np.random.default_rng(int(run["seed"]))
    q_low = np.asarray(run["query_low"], dtype=float)
    q_high = np.asarray(run["query_high"], dtype=float)
    report_stride = int(run["report_stride"])
    record_stride = int(g["record_stride"])

    theta_true = plant.theta
    w_true = ideal_weights(basis, demo.riccati_p, cost.w_q, cost.r_diag)
    w0 = run["w0"]
    if w0 is None:
        w_init = WeightVector(
            w_v=np.zeros(basis.num_v), w_q=np.zeros(basis.num_q),
            w_r_minus=np.zeros(m - 1), r1=cost.r1,
        )
    else:
        w_init = WeightVector.from_stacked(
            np.asarray(w0, dtype=float), basis.num_v, basis.num_q, cost.r1
        )

    param_stack = ParamHistoryStack(
        capacity=int(g["capacity"]), dim=theta_dim(n, m),
        min_eig_threshold=float(g["min_eig_threshold"]),
    )
    if g["stack_source"] == "prerecorded":
        prerecord_param_stack(demo, cfg, param_stack)

    horizon = quality.horizon
    window = max(gains.t1 + gains.t2, horizon + (quality.half_width + 2) * dt) + 4 * dt
    p_log = SampledSignal(n, dt, window)
    u_log = SampledSignal(m, dt, window)
    qhat_log = SampledSignal(n, dt, horizon + 4 * dt)

    x = x0.copy()
    u = optimal_action(demo, x)
    p_log.append(0.0, x[:n])
    u_log.append(0.0, u)
    observer = AdaptiveObserver(
        n, m, p0=x[:n], u0=u, gains=gains, gamma_scale=float(g["gamma0"])
    )
    qhat_log.append(0.0, observer.q_hat)
    irl_stack = IrlHistoryStack(
        capacity=int(irl_cfg["capacity"]), basis=basis, r1=cost.r1, m=m,
        xi2=float(irl_cfg["xi2"]),
    )
    xi1 = float(irl_cfg["xi1"])
    xi2 = float(irl_cfg["xi2"])
    ps = PurgeState(
        kappa1_bar=float(cfg.raw["purge"]["kappa1_bar"]),
        kappa2_bar=float(cfg.raw["purge"]["kappa2_bar"]),
        w_current=w_init,
    )
    trace = RunTrace()
    field_fn = closed_loop_field(demo)

    rows_t, rows_p, rows_q, rows_th, rows_w = [], [], [], [], []
    gamma_lo, gamma_hi = np.inf, 0.0
    queries = 0
    # first step with both the full horizon and the smoothing window available
    eta_floor_step = int(round(horizon / dt)) + quality.half_width

    def offer(cand):
        kappa_before = irl_stack.gram_kappa
        size_before = irl_stack.size
        varpi = data_select(irl_stack, cand, xi1, xi2)
        if varpi:
            branch = "append" if irl_stack.size > size_before else "swap"
            trace.stores.append(
                (cand.t, branch, kappa_before, irl_stack.gram_kappa, irl_stack.sigma_u1_norm)
            )
        ps.varpi = varpi
        w_before = ps.w_current
        eta_bar_before = irl_stack.eta_min
        kappa_gate = irl_stack.gram_kappa
        u1_gate = irl_stack.sigma_u1_norm
        purge_count_before = ps.purge_count
        w_now = purge_policy(ps, irl_stack, cand.eta)
        if w_now is not w_before:
            trace.weight_updates.append((cand.t, varpi, kappa_gate, u1_gate))
        if ps.purge_count > purge_count_before:
            trace.purges.append((cand.t, kappa_gate, cand.eta, eta_bar_before))
        return w_now

    def log_row(t, x_state):
        rows_t.append(t)
        rows_p.append(x_state[:n] - observer.p_hat)
        rows_q.append(x_state[n:] - observer.q_hat)
        rows_th.append(theta_true - observer.theta)
        rows_w.append(ps.w_current.stacked - w_true.stacked)

    if steps > 0:
        log_row(0.0, x)
    for k in range(steps):
        x = rk4_step(field_fn, k * dt, x, dt)
        t = (k + 1) * dt
        u = optimal_action(demo, x)
        p = x[:n]
        p_log.append(t, p)
        u_log.append(t, u)
        if t >= gains.t1 + gains.t2 and (k + 1) % record_stride == 0:
            param_stack.record(
                integral_residual(p_log, t, gains.t1, gains.t2),
                integral_regressor(p_log, u_log, t, gains.t1, gains.t2),
            )
        observer.update_parameters(param_stack, dt)
        observer.step(p, u, dt)
        qhat_log.append(t, observer.q_hat)
        lam = np.linalg.eigvalsh(observer.gamma)
        gamma_lo = min(gamma_lo, float(lam[0]))
        gamma_hi = max(gamma_hi, float(lam[-1]))

        if k + 1 >= eta_floor_step:
            v_smooth = smooth_velocity(p_log, t - horizon, quality.half_width)
            eta1 = quality_eta1(
                observer.p_tilde, qhat_log.value_at(t - horizon), v_smooth, quality.s1
            )
            eta2 = quality_eta2(p_log, u_log, observer.theta_vector, t, quality)
            eta_now = eta1 + eta2
        else:
            eta_now = float("inf")

        theta_v = observer.theta_vector
        offer(Candidate(x=observer.x_hat, u=u, theta=theta_v, eta=eta_now, t=t))
        if mode == "query":
            x_star = rng.uniform(q_low, q_high)
            u_star = query(demo, x_star)
            queries += 1
            offer(Candidate(x=x_star, u=u_star, theta=theta_v, eta=eta_now, t=t))

        if (k + 1) % report_stride == 0:
            log_row(t, x)

    if irl_stack.size > 0:
        final_residual = float(
            np.linalg.norm(
                irl_stack.sigma_matrix @ ps.w_current.stacked - irl_stack.rhs_vector
            )
        )
    else:
        final_residual = float("nan")

    def stackrows(rows, width):
        if rows:
            return np.asarray(rows)
        return np.zeros((0, width))

    return RunReport(
        t=np.asarray(rows_t),
        p_tilde=stackrows(rows_p, n),
        q_tilde=stackrows(rows_q, n),
        theta_tilde=stackrows(rows_th, theta_dim(n, m)),
        w_tilde=stackrows(rows_w, basis.width(m)),
        purge_count=ps.purge_count,
        queries=queries,
        final_kappa=irl_stack.kappa,
        final_gram_kappa=irl_stack.gram_kappa,
        final_residual=final_residual,
        gamma_eig_min=float(gamma_lo) if steps > 0 else float("nan"),
        gamma_eig_max=float(gamma_hi) if steps > 0 else float("nan"),
        w_true=w_true.stacked,
        w_final=ps.w_current.stacked,
        wall_clock_seconds=time.perf_counter() - t_start,
        trace=trace,
        config=cfg.to_dict(),
    )


def _fmt(value):
    return repr(float(value))


def write_report(report, out_dir):
    """Write the four error-series CSVs and summary.json; returns the paths.

    CSVs are RFC 4180 (CRLF, header row) with t to six decimal places; the
    summary omits wall-clock so identical runs write identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = [
        ("ptilde.csv", "ptilde", report.p_tilde),
        ("qtilde.csv", "qtilde", report.q_tilde),
        ("thetatilde.csv", "thetatilde", report.theta_tilde),
        ("wtilde.csv", "wtilde", report.w_tilde),
    ]
    paths = []
    for fname, prefix, arr in series:
        path = out / fname
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            ncols = arr.shape[1]
            writer.writerow(["t"] + [f"{prefix}_{i + 1}" for i in range(ncols)] + ["norm"])
            for t, row in zip(report.t, arr):
                writer.writerow(
                    [f"{t:.6f}"] + [_fmt(v) for v in row] + [_fmt(np.linalg.norm(row))]
                )
        paths.append(path)

    w_true_norm = float(np.linalg.norm(report.w_true))
    final = {
        "p_tilde_norm": float(report.norms("p_tilde")[-1]) if report.t.size else None,
        "q_tilde_norm": float(report.norms("q_tilde")[-1]) if report.t.size else None,
        "theta_tilde_norm": float(report.norms("theta_tilde")[-1]) if report.t.size else None,
        "w_tilde_norm": float(report.norms("w_tilde")[-1]) if report.t.size else None,
        "w_tilde_rel": (
            float(report.norms("w_tilde")[-1] / w_true_norm)
            if report.t.size and w_true_norm > 0
            else None
        ),
        "kappa": report.final_kappa,
        "gram_kappa": report.final_gram_kappa,
        "lstsq_residual": report.final_residual,
    }
    summary = {
        "seed": report.config["run"]["seed"],
        "mode": report.config["run"]["mode"],
        "purge_count": report.purge_count,
        "queries": report.queries,
        "gamma_eig_min": report.gamma_eig_min,
        "gamma_eig_max": report.gamma_eig_max,
        "final": final,
        "config": report.config,
    }
    spath = out / "summary.json"
    with open(spath, "w") as fh:
        json.dump(_sanitize(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(spath)
    return paths


def _sanitize(obj):
    """Make numpy scalars/inf/nan JSON-representable."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj
