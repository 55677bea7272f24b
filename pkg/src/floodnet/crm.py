r"""Capacitance-resistance forward models and their analytic sensitivities.

Three variants share one first-order balance: production relaxes toward the
currently allocated injection with time constant tau, so each step applies

.. math::
    q(t_n) = q(t_{n-1})\,e^{-\Delta t_n/\tau}
             + \left(1 - e^{-\Delta t_n/\tau}\right)
               \left[\textstyle\sum_i f_{ij} I_i(t_n)
                     - J\,\tau\,\Delta p_{wf}/\Delta t_n\right]

with injection held constant and BHP varying linearly across each step.
The variants differ only in how finely the drainage volume is carved up:

- CRMT: one tank, one gain on total injection (3 parameters);
- CRMP: one tau per producer, a gain per injector-producer pair;
- CRMIP: tau, gain, initial rate, and productivity index per pair.

Every predictor has a matching gradient routine returning the partial
derivative of each predicted sample with respect to each parameter, obtained
by differentiating the recursion itself (forward accumulation through time).
``crmp_predict_closed_form`` expands the same recursion as an explicit sum
over past steps and exists as an independent cross-check.

Row 0 of every prediction is the initial condition q(t0); injection at t0
never enters the recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from numpy.typing import NDArray

from .core import RateSeries

# Lower clamp for fitted time constants. Exponentials are only ever evaluated
# in the decaying form exp(-dt/tau), so the clamp guards division, not overflow.
TAU_MIN = 1e-4


@dataclass(frozen=True, eq=False)
class CrmtParams:
    """Tank-model parameters: the whole field as one control volume.

    Args
    ----
    tau : float
        Field time constant in days, > 0.
    f_field : float
        Fraction of total injection supporting the producing group, in [0, 1].
    q0 : float
        Production rate at t0 (volume/day), >= 0.
    """

    tau: float
    f_field: float
    q0: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.f_field <= 1.0:
            raise ValueError(f"f_field must lie in [0, 1], got {self.f_field}")
        if self.q0 < 0:
            raise ValueError(f"q0 must be non-negative, got {self.q0}")


@dataclass(frozen=True, eq=False)
class CrmpParams:
    """Per-producer CRM parameters.

    Args
    ----
    tau : array, shape (n_pro,)
        Time constant per producer (days), > 0.
    gains : array, shape (n_inj, n_pro)
        Allocation factor f_ij of injector i toward producer j, >= 0.
        Row sums are constrained during fitting, not at construction.
    q0 : array, shape (n_pro,)
        Production rates at t0, >= 0.
    j_index : array, shape (n_pro,), optional
        Productivity index per producer (volume/day/pressure), >= 0.
        The BHP drive term is active only when this is present and the
        series carries pressures.
    """

    tau: NDArray
    gains: NDArray
    q0: NDArray
    j_index: NDArray | None = None

    def __post_init__(self):
        tau = _own(self.tau, 1, "tau")
        gains = _own(self.gains, 2, "gains")
        q0 = _own(self.q0, 1, "q0")
        p = tau.shape[0]
        if gains.shape[1] != p or q0.shape[0] != p:
            raise ValueError(
                f"inconsistent producer counts: tau {tau.shape}, "
                f"gains {gains.shape}, q0 {q0.shape}"
            )
        _require(np.all(tau > 0), "all tau must be positive")
        _require(np.all(gains >= 0), "all gains must be non-negative")
        _require(np.all(q0 >= 0), "all q0 must be non-negative")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "q0", q0)
        if self.j_index is not None:
            j = _own(self.j_index, 1, "j_index")
            if j.shape[0] != p:
                raise ValueError(f"j_index has shape {j.shape}, expected ({p},)")
            _require(np.all(j >= 0), "all j_index must be non-negative")
            object.__setattr__(self, "j_index", j)

    @property
    def n_inj(self) -> int:
        return self.gains.shape[0]

    @property
    def n_pro(self) -> int:
        return self.gains.shape[1]


@dataclass(frozen=True, eq=False)
class CrmipParams:
    """Per-pair CRM parameters; every field is shaped (n_inj, n_pro)."""

    tau: NDArray
    gains: NDArray
    q0: NDArray
    j_index: NDArray | None = None

    def __post_init__(self):
        tau = _own(self.tau, 2, "tau")
        gains = _own(self.gains, 2, "gains")
        q0 = _own(self.q0, 2, "q0")
        if not (tau.shape == gains.shape == q0.shape):
            raise ValueError(
                f"shape mismatch: tau {tau.shape}, gains {gains.shape}, q0 {q0.shape}"
            )
        _require(np.all(tau > 0), "all tau must be positive")
        _require(np.all(gains >= 0), "all gains must be non-negative")
        _require(np.all(q0 >= 0), "all q0 must be non-negative")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "q0", q0)
        if self.j_index is not None:
            j = _own(self.j_index, 2, "j_index")
            if j.shape != tau.shape:
                raise ValueError(f"j_index has shape {j.shape}, expected {tau.shape}")
            _require(np.all(j >= 0), "all j_index must be non-negative")
            object.__setattr__(self, "j_index", j)

    @property
    def n_inj(self) -> int:
        return self.gains.shape[0]

    @property
    def n_pro(self) -> int:
        return self.gains.shape[1]


@dataclass(frozen=True, eq=False)
class GradientBundle:
    """Partial derivatives of every predicted sample w.r.t. every parameter.

    Leading axis is always the time step. Trailing axes match the owning
    parameter container: for CRMP, ``d_tau``/``d_q0``/``d_j`` are
    (n_steps, n_pro) and ``d_gains`` is (n_steps, n_inj, n_pro); for CRMIP
    every array is (n_steps, n_inj, n_pro); for CRMT every array is
    (n_steps,). ``d_j`` is None when no BHP term is active.
    """

    d_tau: NDArray
    d_gains: NDArray
    d_q0: NDArray
    d_j: NDArray | None = None


def _own(values, ndim: int, name: str) -> NDArray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


@njit(cache=True)
def _linear_filter(decay, drive, start):
    """out[0] = start; out[k] = decay[k] * out[k-1] + drive[k], columnwise."""
    n, m = decay.shape
    out = np.empty((n, m))
    for j in range(m):
        out[0, j] = start[j]
    for k in range(1, n):
        for j in range(m):
            out[k, j] = decay[k, j] * out[k - 1, j] + drive[k, j]
    return out


def _decay_factors(times: NDArray, tau: NDArray) -> NDArray:
    """exp(-dt_n / tau_j) as an (n_steps, m) array; row 0 is unused padding."""
    steps = np.diff(times)
    decay = np.ones((times.shape[0], tau.shape[0]))
    decay[1:] = np.exp(-steps[:, None] / tau[None, :])
    return decay


def _bhp_slope(series: RateSeries) -> NDArray | None:
    """Pressure-change slopes dp_wf/dt per step, (n_steps, n_pro); row 0 zero."""
    if series.bhp is None:
        return None
    slope = np.zeros_like(series.bhp)
    slope[1:] = np.diff(series.bhp, axis=0) / series.dts[:, None]
    return slope


def crmp_step(
    q_prev: float,
    dt: float,
    tau_j: float,
    gains_col_j: NDArray,
    inj_now: NDArray,
    bhp_term: tuple[float, float] | None = None,
) -> float:
    r"""Advance one producer one step of the per-producer recursion.

    Args
    ----
    q_prev : float
        Production rate at the previous timestep.
    dt : float
        Step length (days), > 0.
    tau_j : float
        Producer time constant (days), > 0.
    gains_col_j : array, shape (n_inj,)
        Allocation factors of each injector toward this producer.
    inj_now : array, shape (n_inj,)
        Injection rates over this step.
    bhp_term : (J_j, dp_wf), optional
        Productivity index and the BHP change over the step; omitted when
        pressures are not modeled.

    Returns
    -------
    float
        q_j(t_n) = q_prev * e^(-dt/tau) + (1 - e^(-dt/tau)) *
        [sum_i f_ij I_i(t_n) - J_j tau_j dp_wf / dt].
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if tau_j <= 0:
        raise ValueError(f"tau must be positive, got {tau_j}")
    decay = np.exp(-dt / tau_j)
    drive = float(np.dot(np.asarray(gains_col_j, float), np.asarray(inj_now, float)))
    if bhp_term is not None:
        j_j, dp = bhp_term
        drive -= j_j * tau_j * dp / dt
    return q_prev * decay + (1.0 - decay) * drive


def _crmp_drive(params: CrmpParams, series: RateSeries) -> NDArray:
    """Allocated injection minus BHP drive, per step and producer."""
    u = series.injection @ params.gains
    slope = _bhp_slope(series)
    if params.j_index is not None and slope is not None:
        u -= params.j_index[None, :] * params.tau[None, :] * slope
    return u


def _check_injectors(n_model: int, series: RateSeries) -> None:
    if series.injection.shape[1] != n_model:
        raise ValueError(
            f"params expect {n_model} injectors but series has "
            f"{series.injection.shape[1]} injection columns"
        )


def crmp_predict(
    params: CrmpParams, series: RateSeries, q_start: NDArray | None = None
) -> NDArray:
    """Run the per-producer recursion over a whole series.

    Args
    ----
    params : CrmpParams
    series : RateSeries
        Validated against the owning field. BHP drive is applied only when
        both ``params.j_index`` and ``series.bhp`` are present.
    q_start : array, shape (n_pro,), optional
        Rate seeding row 0. Defaults to ``params.q0``; pass the last
        training-segment prediction to continue a fitted model across a
        train/test boundary.

    Returns
    -------
    array, shape (n_steps, n_pro)
        Predicted production; row 0 equals the seed.
    """
    _check_injectors(params.n_inj, series)
    start = params.q0 if q_start is None else np.asarray(q_start, float)
    if start.shape != (params.n_pro,):
        raise ValueError(f"q_start has shape {start.shape}, expected ({params.n_pro},)")
    decay = _decay_factors(series.times, params.tau)
    drive = (1.0 - decay) * _crmp_drive(params, series)
    drive[0] = 0.0
    return _linear_filter(decay, drive, start)


def crmp_predict_closed_form(params: CrmpParams, series: RateSeries) -> NDArray:
    r"""Evaluate the per-producer model as an explicit sum over past steps.

    Expands the recursion in terms of q(t0):

    .. math::
        q_j(t_n) = q_j(t_0) e^{-(t_n-t_0)/\tau_j}
            + \sum_{k=1}^{n} e^{-(t_n-t_k)/\tau_j}
              \left(1 - e^{-\Delta t_k/\tau_j}\right) u_j(t_k)

    where u is the allocated-injection-minus-BHP drive. Mathematically
    identical to :func:`crmp_predict`; kept as an independent oracle.
    """
    _check_injectors(params.n_inj, series)
    t = series.times
    n = series.n_steps
    u = _crmp_drive(params, series)
    out = np.empty((n, params.n_pro))
    lag = t[:, None] - t[None, :]  # t_n - t_k
    lower = np.tril(np.ones((n, n)))
    for j in range(params.n_pro):
        tau_j = params.tau[j]
        c = np.zeros(n)
        c[1:] = (1.0 - np.exp(-series.dts / tau_j)) * u[1:, j]
        weights = np.exp(-np.maximum(lag, 0.0) / tau_j) * lower
        out[:, j] = params.q0[j] * np.exp(-(t - t[0]) / tau_j) + weights @ c
    return out


def crmt_predict(params: CrmtParams, series: RateSeries) -> NDArray:
    """Run the tank model: one gain applied to total injection, no BHP terms.

    Returns
    -------
    array, shape (n_steps,)
        Field-total production; element 0 equals ``params.q0``.
    """
    total = series.injection.sum(axis=1)
    decay = _decay_factors(series.times, np.array([params.tau]))
    drive = (1.0 - decay) * (params.f_field * total)[:, None]
    drive[0] = 0.0
    return _linear_filter(decay, drive, np.array([params.q0]))[:, 0]


def crmip_predict(params: CrmipParams, series: RateSeries) -> tuple[NDArray, NDArray]:
    """Run an independent recursion per injector-producer bundle.

    Returns
    -------
    (array, array)
        Per-pair rates with shape (n_steps, n_inj, n_pro) and producer
        totals with shape (n_steps, n_pro), the sum over injectors.
    """
    _check_injectors(params.n_inj, series)
    n = series.n_steps
    n_inj, n_pro = params.gains.shape
    decay = _decay_factors(series.times, params.tau.ravel())
    u = params.gains[None, :, :] * series.injection[:, :, None]
    slope = _bhp_slope(series)
    if params.j_index is not None and slope is not None:
        u -= (params.j_index * params.tau)[None, :, :] * slope[:, None, :]
    drive = (1.0 - decay) * u.reshape(n, n_inj * n_pro)
    drive[0] = 0.0
    per_pair = _linear_filter(decay, drive, params.q0.ravel()).reshape(n, n_inj, n_pro)
    return per_pair, per_pair.sum(axis=1)


def crmp_gradients(params: CrmpParams, series: RateSeries) -> GradientBundle:
    r"""Differentiate the per-producer recursion w.r.t. every parameter.

    Each partial obeys its own first-order recursion in n, driven by the
    primal trajectory; all of them are accumulated forward in one pass.
    Producers are decoupled, so partials of q_j w.r.t. parameters of any
    other producer are identically zero and are not stored.

    Returns
    -------
    GradientBundle
        ``d_tau``/``d_q0`` shaped (n_steps, n_pro), ``d_gains`` shaped
        (n_steps, n_inj, n_pro), ``d_j`` shaped (n_steps, n_pro) or None.
    """
    _check_injectors(params.n_inj, series)
    n = series.n_steps
    n_inj, n_pro = params.gains.shape
    t = series.times
    decay = _decay_factors(series.times, params.tau)
    u = _crmp_drive(params, series)
    q = crmp_predict(params, series)
    slope = _bhp_slope(series)
    with_press = params.j_index is not None and slope is not None

    d_q0 = np.exp(-(t[:, None] - t[0]) / params.tau[None, :])

    # dq/dtau: driven by dE/dtau (q_{n-1} - u_n) plus u's own tau dependence
    dt_over_tau2 = np.zeros((n, n_pro))
    dt_over_tau2[1:] = series.dts[:, None] / params.tau[None, :] ** 2
    drive_tau = np.zeros((n, n_pro))
    drive_tau[1:] = dt_over_tau2[1:] * decay[1:] * (q[:-1] - u[1:])
    if with_press:
        drive_tau[1:] -= (1.0 - decay[1:]) * params.j_index[None, :] * slope[1:]
    d_tau = _linear_filter(decay, drive_tau, np.zeros(n_pro))

    gain_drive = (1.0 - decay)[:, None, :] * series.injection[:, :, None]
    gain_drive[0] = 0.0
    tiled = np.repeat(decay, n_inj, axis=1)  # pair columns ordered (i, j)
    d_gains = _linear_filter(
        tiled, gain_drive.reshape(n, n_inj * n_pro), np.zeros(n_inj * n_pro)
    ).reshape(n, n_inj, n_pro)

    d_j = None
    if with_press:
        drive_j = np.zeros((n, n_pro))
        drive_j[1:] = -(1.0 - decay[1:]) * params.tau[None, :] * slope[1:]
        d_j = _linear_filter(decay, drive_j, np.zeros(n_pro))

    return GradientBundle(d_tau=d_tau, d_gains=d_gains, d_q0=d_q0, d_j=d_j)


def crmt_gradients(params: CrmtParams, series: RateSeries) -> GradientBundle:
    """Differentiate the tank model; every array has shape (n_steps,)."""
    total = series.injection.sum(axis=1)
    n = series.n_steps
    t = series.times
    decay = _decay_factors(series.times, np.array([params.tau]))
    u = params.f_field * total
    q = crmt_predict(params, series)

    d_q0 = np.exp(-(t - t[0]) / params.tau)

    drive_tau = np.zeros((n, 1))
    drive_tau[1:, 0] = (
        series.dts / params.tau**2 * decay[1:, 0] * (q[:-1] - u[1:])
    )
    d_tau = _linear_filter(decay, drive_tau, np.zeros(1))[:, 0]

    drive_f = np.zeros((n, 1))
    drive_f[1:, 0] = (1.0 - decay[1:, 0]) * total[1:]
    d_f = _linear_filter(decay, drive_f, np.zeros(1))[:, 0]

    return GradientBundle(d_tau=d_tau, d_gains=d_f, d_q0=d_q0, d_j=None)


def crmip_gradients(params: CrmipParams, series: RateSeries) -> GradientBundle:
    """Differentiate every per-pair recursion; arrays are (n_steps, n_inj, n_pro).

    Entries are partials of the pair rate q_ij (equivalently of the producer
    total, since other pairs do not depend on pair (i, j)'s parameters).
    """
    _check_injectors(params.n_inj, series)
    n = series.n_steps
    n_inj, n_pro = params.gains.shape
    m = n_inj * n_pro
    t = series.times
    decay = _decay_factors(series.times, params.tau.ravel())
    slope = _bhp_slope(series)
    with_press = params.j_index is not None and slope is not None

    u = params.gains[None, :, :] * series.injection[:, :, None]
    if with_press:
        u -= (params.j_index * params.tau)[None, :, :] * slope[:, None, :]
    u = u.reshape(n, m)
    per_pair, _ = crmip_predict(params, series)
    q = per_pair.reshape(n, m)

    d_q0 = np.exp(-(t[:, None] - t[0]) / params.tau.ravel()[None, :]).reshape(
        n, n_inj, n_pro
    )

    dt_over_tau2 = np.zeros((n, m))
    dt_over_tau2[1:] = series.dts[:, None] / params.tau.ravel()[None, :] ** 2
    drive_tau = np.zeros((n, m))
    drive_tau[1:] = dt_over_tau2[1:] * decay[1:] * (q[:-1] - u[1:])
    if with_press:
        jslope = (params.j_index.ravel()[None, :]) * np.repeat(slope, n_inj, axis=1)
        drive_tau[1:] -= (1.0 - decay[1:]) * jslope[1:]
    d_tau = _linear_filter(decay, drive_tau, np.zeros(m)).reshape(n, n_inj, n_pro)

    drive_g = np.zeros((n, m))
    drive_g[1:] = (1.0 - decay[1:]) * np.repeat(
        series.injection, n_pro, axis=1
    )[1:]
    d_gains = _linear_filter(decay, drive_g, np.zeros(m)).reshape(n, n_inj, n_pro)

    d_j = None
    if with_press:
        drive_j = np.zeros((n, m))
        drive_j[1:] = (
            -(1.0 - decay[1:])
            * params.tau.ravel()[None, :]
            * np.repeat(slope, n_inj, axis=1)[1:]
        )
        d_j = _linear_filter(decay, drive_j, np.zeros(m)).reshape(n, n_inj, n_pro)

    return GradientBundle(d_tau=d_tau, d_gains=d_gains, d_q0=d_q0, d_j=d_j)
