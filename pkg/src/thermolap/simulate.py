"""Forward time-domain integration of an optimized control strategy.

The optimizer works in the arc-length domain on a finite mesh; this module
re-runs its control schedule through the same model equations with a plain
fixed-step RK4 integrator in the time domain. Agreement between the two
routes validates the transcription, the mesh and the solver together. The
two code paths share only the model kernels, not the discretization.

The integrated state is [s, x(10), e(6)]: arc position, the ten model
states, and six energy meters (battery internal energy plus its split into
wheel work, machine, inverter and battery losses and the auxiliary draw)
whose balance must close to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import N_DRIVES, STATE_NAMES
from .errors import VerificationError

__all__ = [
    "ControlSchedule",
    "SimTrace",
    "VerificationReport",
    "schedule_from_arrays",
    "integrate",
    "compare",
    "energy_residual",
    "DEFAULT_STATE_TOL",
]

# pass/fail thresholds of the verification report: max deviation between
# collocation nodes and the resimulated trajectory, per state
DEFAULT_STATE_TOL = {
    "v": 0.60,       # [m/s]
    "beta": 0.030,   # [rad]
    "psidot": 0.080,  # [rad/s]
    "n": 0.25,       # [m]
    "xi": 0.030,     # [rad]
    "T_M": 0.80,     # [K]
    "T_I": 0.80,
    "T_B": 0.80,
    "T_F1": 0.80,
    "T_F2": 0.80,
}
DEFAULT_TIME_TOL = 0.005  # relative race time deviation


class ControlSchedule(object):
    """Controls as a function of arc position.

    Lookups interpolate the stored samples linearly and clamp outside the
    sampled range.
    """

    def __init__(self, s_samples, u_samples):
        self.s = np.asarray(s_samples, dtype=float)
        self.u = np.asarray(u_samples, dtype=float)
        if self.s.ndim != 1 or self.u.shape != (self.s.size, 4):
            raise VerificationError("control schedule shape mismatch")
        if not (np.diff(self.s) > 0.0).all():
            raise VerificationError("control schedule positions must increase")

    def lookup(self, s_query):
        """Linear interpolation of the four controls at one position."""
        s_q = min(max(s_query, self.s[0]), self.s[-1])
        i = np.searchsorted(self.s, s_q, side="right") - 1
        i = min(max(i, 0), self.s.size - 2)
        w = (s_q - self.s[i]) / (self.s[i + 1] - self.s[i])
        return self.u[i] + w * (self.u[i + 1] - self.u[i])


def schedule_from_arrays(s_nodes, u_intervals, u_end=None):
    """Schedule replaying the plan's node-attributed control values.

    Interval k's control vector belongs to its left node s_k and the applied
    control varies linearly to the next node's vector, matching the
    transcription's control model sample for sample. u_end supplies the
    value at the final node: cyclic plans pass the first interval's vector
    so the schedule closes the lap continuously; by default the last
    interval's vector is held (pinned horizons).
    """
    s_nodes = np.asarray(s_nodes, dtype=float)
    u = np.atleast_2d(np.asarray(u_intervals, dtype=float))
    if s_nodes.size != u.shape[0] + 1:
        raise VerificationError("need one more node than control intervals")
    tail = u[-1] if u_end is None else np.asarray(u_end, dtype=float)
    return ControlSchedule(s_nodes.copy(), np.vstack([u, tail]))


@dataclass
class SimTrace:
    """Result of one forward integration."""

    t: np.ndarray          # time stamps [s]
    s: np.ndarray          # arc position [m]
    states: np.ndarray     # (len(t), 10) model states
    energies: np.ndarray   # (len(t), 6) energy meters [J]
    controls: np.ndarray   # (len(t), 4) applied controls
    finished: bool         # reached the requested end position
    diagnostic: str        # "finished" or the violated invariant

    @property
    def final_time(self):
        return float(self.t[-1])

    def state(self, name):
        return self.states[:, STATE_NAMES.index(name)]


ENERGY_NAMES = ("e_batt_internal", "e_wheel", "e_loss_machines",
                "e_loss_inverters", "e_loss_battery", "e_aux")


def _rhs(y, schedule, track, vp, tp, pp):
    """Time derivative of the augmented simulation state."""
    s_pos = y[0]
    x = y[1:11]
    u = schedule.lookup(s_pos)
    kappa = float(track.kappa_at(s_pos))
    rates, extras = dynamics.time_derivatives(list(x), list(u), kappa, vp, tp, pp)
    chain = extras["chain"]
    dy = np.empty(17)
    dy[0] = 1.0 / float(extras["dt_ds"])
    dy[1:11] = [float(r) for r in rates]
    dy[11] = float(chain.p_in_b)
    dy[12] = float(chain.p_wheel)
    dy[13] = N_DRIVES * float(chain.loss_m)
    dy[14] = N_DRIVES * float(chain.loss_i)
    dy[15] = float(chain.loss_b)
    dy[16] = pp.aux_power
    return dy, u


def _invariant_violation(y, vp):
    """Name of the violated model-validity condition, or None."""
    v, beta, _, n, xi = y[1], y[2], y[3], y[4], y[5]
    if not np.isfinite(y).all():
        return "non-finite state"
    if v <= 0.25 * vp.v_min:
        return "speed collapsed"
    if abs(xi + beta) >= 1.45:
        return "course angle left the forward cone"
    temps = y[6:11]
    if (temps < -40.0).any() or (temps > 400.0).any():
        return "temperature left the plausibility window"
    return None


def _hermite(y0, f0, y1, f1, h, theta):
    """Cubic Hermite interpolation on one step, theta in [0, 1]."""
    t2 = theta * theta
    t3 = t2 * theta
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + theta
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _hermite_dtheta(y0, f0, y1, f1, h, theta):
    """Derivative of the cubic Hermite interpolant with respect to theta."""
    t2 = theta * theta
    return ((6 * t2 - 6 * theta) * y0
            + (3 * t2 - 4 * theta + 1) * h * f0
            + (-6 * t2 + 6 * theta) * y1
            + (3 * t2 - 2 * theta) * h * f1)


def integrate(track, schedule, x0, vp, tp, pp, dt=0.002, s_end=None,
              t_max=600.0, s_start=0.0):
    """Fixed-step RK4 run of the model under a given control schedule.

    Integrates from s = s_start until the arc position reaches s_end
    (default: the schedule's last sample), a model invariant fails, or
    t_max elapses. The crossing of s_end is resolved by cubic Hermite
    interpolation inside the final step, preserving the integrator's
    fourth order at the finish line.
    """
    if s_end is None:
        s_end = float(schedule.s[-1])
    if dt <= 0.0:
        raise VerificationError("time step must be positive")
    y = np.zeros(17)
    y[0] = float(s_start)
    y[1:11] = np.asarray(x0, dtype=float)

    rows_t, rows_y, rows_u = [0.0], [y.copy()], [schedule.lookup(y[0])]
    t = 0.0
    f0, _ = _rhs(y, schedule, track, vp, tp, pp)
    finished = False
    diagnostic = "time limit reached"
    max_steps = int(np.ceil(t_max / dt)) + 1
    for _ in range(max_steps):
        k1 = f0
        k2, _ = _rhs(y + 0.5 * dt * k1, schedule, track, vp, tp, pp)
        k3, _ = _rhs(y + 0.5 * dt * k2, schedule, track, vp, tp, pp)
        k4, _ = _rhs(y + dt * k3, schedule, track, vp, tp, pp)
        y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_next = t + dt

        bad = _invariant_violation(y_next, vp)
        if bad is not None:
            diagnostic = bad
            break
        f_next, u_next = _rhs(y_next, schedule, track, vp, tp, pp)
        if y_next[0] >= s_end:
            # land exactly on s_end inside this step
            theta = (s_end - y[0]) / (y_next[0] - y[0])
            for _ in range(50):
                s_th = _hermite(y[0], f0[0], y_next[0], f_next[0], dt, theta)
                ds_th = _hermite_dtheta(y[0], f0[0], y_next[0], f_next[0],
                                        dt, theta)
                if abs(ds_th) < 1e-12:
                    break
                step = (s_th - s_end) / ds_th
                theta = min(max(theta - step, 0.0), 1.0)
                if abs(step) < 1e-14:
                    break
            y_land = _hermite(y, f0, y_next, f_next, dt, theta)
            y_land[0] = s_end
            t_land = t + theta * dt
            rows_t.append(t_land)
            rows_y.append(y_land)
            rows_u.append(schedule.lookup(s_end))
            finished = True
            diagnostic = "finished"
            break
        y, t, f0 = y_next, t_next, f_next
        rows_t.append(t)
        rows_y.append(y.copy())
        rows_u.append(u_next)

    ys = np.vstack(rows_y)
    return SimTrace(
        t=np.asarray(rows_t), s=ys[:, 0], states=ys[:, 1:11],
        energies=ys[:, 11:], controls=np.vstack(rows_u),
        finished=finished, diagnostic=diagnostic)


def energy_residual(trace):
    """Relative closure error of the drawn-vs-accounted energy balance."""
    e = trace.energies[-1]
    drawn = e[0]
    accounted = e[1:].sum()
    return abs(drawn - accounted) / max(abs(drawn), 1.0)


@dataclass
class VerificationReport:
    """Deviation summary between collocation solution and resimulation."""

    race_time_solution: float
    race_time_sim: float
    state_dev: dict            # per-state max absolute deviation at the nodes
    state_tol: dict
    time_tol: float
    finished: bool
    diagnostic: str
    energy_residual: float

    @property
    def time_dev(self):
        return abs(self.race_time_sim - self.race_time_solution) / max(
            self.race_time_solution, 1e-12)

    @property
    def states_passed(self):
        return {k: self.state_dev[k] <= self.state_tol[k] for k in self.state_dev}

    @property
    def passed(self):
        return (self.finished and self.time_dev <= self.time_tol
                and all(self.states_passed.values()))

    def render(self):
        lines = [
            f"race time (optimizer)   {self.race_time_solution:.4f} s",
            f"race time (simulation)  {self.race_time_sim:.4f} s",
            f"relative deviation      {self.time_dev:.3e} "
            f"(tol {self.time_tol:.1e}) "
            f"[{'ok' if self.time_dev <= self.time_tol else 'FAIL'}]",
            f"energy balance residual {self.energy_residual:.3e}",
            f"simulation outcome      {self.diagnostic}",
        ]
        for name in STATE_NAMES:
            dev, tol = self.state_dev[name], self.state_tol[name]
            lines.append(f"max |d {name:<6}|          {dev:10.4e} "
                         f"(tol {tol:.1e}) [{'ok' if dev <= tol else 'FAIL'}]")
        lines.append(f"verification            "
                     f"{'PASSED' if self.passed else 'FAILED'}")
        return "\n".join(lines)


def compare(mesh_s, states_opt, race_time_opt, trace,
            state_tol=None, time_tol=DEFAULT_TIME_TOL):
    """Compare an optimized trajectory against its forward simulation.

    The trace is interpolated onto the mesh node positions; the report
    carries the maximum per-state deviations and the relative race time
    error. A trace that failed to finish fails verification outright.
    """
    tol = dict(DEFAULT_STATE_TOL)
    if state_tol:
        tol.update(state_tol)
    dev = {}
    upto = min(float(trace.s[-1]), float(mesh_s[-1]))
    node_mask = mesh_s <= upto + 1e-9
    for j, name in enumerate(STATE_NAMES):
        sim_vals = np.interp(mesh_s[node_mask], trace.s, trace.states[:, j])
        dev[name] = float(np.abs(states_opt[node_mask, j] - sim_vals).max())
    return VerificationReport(
        race_time_solution=float(race_time_opt),
        race_time_sim=trace.final_time,
        state_dev=dev, state_tol=tol, time_tol=time_tol,
        finished=trace.finished, diagnostic=trace.diagnostic,
        energy_residual=energy_residual(trace))
