"""Composed powertrain-thermal-vehicle dynamics in one evaluation kernel.

This module wires the component models together: wheel force demand flows
through the machine, inverter and battery loss maps, the resulting
dissipations drive the thermal network, and the single-track model closes
the motion states. One kernel serves both the collocation transcription
(evaluated on batches of autodiff duals) and the verification simulator
(evaluated on plain floats).

State vector (10): v, beta, psi_dot, n, xi, t_m, t_i, t_b, t_f1, t_f2
Control vector (4): f_d, f_b, delta, gamma
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import powerloss, thermal, vehicle

__all__ = [
    "STATE_NAMES",
    "CONTROL_NAMES",
    "N_DRIVES",
    "ChainPowers",
    "power_chain",
    "spatial_derivatives",
    "time_derivatives",
]

STATE_NAMES = ("v", "beta", "psidot", "n", "xi",
               "T_M", "T_I", "T_B", "T_F1", "T_F2")
CONTROL_NAMES = ("F_d", "F_b", "delta", "gamma")

N_STATES = len(STATE_NAMES)
N_CONTROLS = len(CONTROL_NAMES)

# machine/inverter pairs sharing the traction load and cooling circuit 1
N_DRIVES = 2


@dataclass
class ChainPowers:
    """Power flow through the drivetrain at one operating point [W].

    Per-component quantities (p_out_m, loss_m, p_out_i, loss_i) refer to one
    of the two machine/inverter pairs; battery quantities are totals.
    p_sigma is the power the strategy requests from the storage: battery
    terminal power including the auxiliary load.
    """

    p_wheel: object    # total propulsive power at the wheels
    p_out_m: object    # mechanical output of one machine
    p_in_m: object     # electrical input of one machine
    p_out_i: object    # output of one inverter (= machine input)
    p_in_i: object     # dc input of one inverter
    p_out_b: object    # battery terminal power (2 inverters + aux)
    p_in_b: object     # internal battery power (chemical)
    loss_m: object     # dissipation of one machine
    loss_i: object     # dissipation of one inverter
    loss_b: object     # battery dissipation

    @property
    def p_sigma(self):
        """Total requested (wheel) power [W]."""
        return self.p_wheel


def power_chain(f_d, f_b, v, pp):
    """Propagate a wheel force demand through the loss chain.

    The requested power P_sigma = (f_d + f_b) * v at the wheels splits
    evenly across the two machines, each machine input loads one inverter,
    both inverter inputs plus the auxiliary load draw from the battery
    terminals. Braking runs the same chain in reverse (full regeneration).
    Accepts arrays and autodiff duals.
    """
    p_wheel = (f_d + f_b) * v
    p_out_m = p_wheel / N_DRIVES
    p_in_m = powerloss.input_power(pp.machine_fit, p_out_m)
    p_out_i = p_in_m
    p_in_i = powerloss.input_power(pp.inverter_fit, p_out_i)
    p_out_b = N_DRIVES * p_in_i + pp.aux_power
    p_in_b = powerloss.battery_input_power(pp.battery, p_out_b)
    return ChainPowers(
        p_wheel=p_wheel,
        p_out_m=p_out_m, p_in_m=p_in_m,
        p_out_i=p_out_i, p_in_i=p_in_i,
        p_out_b=p_out_b, p_in_b=p_in_b,
        loss_m=p_in_m - p_out_m,
        loss_i=p_in_i - p_out_i,
        loss_b=p_in_b - p_out_b,
    )


def time_derivatives(x, u, kappa, vp, tp, pp):
    """Time-domain state derivatives and diagnostic quantities.

    x and u are sequences of the 10 state and 4 control components (each a
    float, an array or an autodiff dual). Returns (rates, extras) where
    rates is the list of the 10 time derivatives and extras carries the
    power chain, the contact forces and ds/dt for reuse by constraints and
    by the simulator's bookkeeping.
    """
    v, beta, psi_dot, n, xi, t_m, t_i, t_b, t_f1, t_f2 = x
    f_d, f_b, delta, gamma = u
    forces = vehicle.vehicle_forces(v, beta, psi_dot, f_d, f_b, delta, gamma, vp)
    dv, dbeta, dpsi_dot = vehicle.vehicle_rates(
        v, beta, psi_dot, f_d, f_b, delta, gamma, vp, forces=forces)
    chain = power_chain(f_d, f_b, v, pp)
    d_t = thermal.thermal_rates(t_m, t_i, t_b, t_f1, t_f2,
                                chain.loss_m, chain.loss_i, chain.loss_b, tp)
    dt_ds = vehicle.time_scale(v, beta, n, xi, kappa)
    dn = v * np.sin(xi + beta)
    # xi is measured against the track tangent, which itself rotates at
    # kappa radians per meter of progress
    dxi = psi_dot - kappa / dt_ds
    rates = [dv, dbeta, dpsi_dot, dn, dxi,
             d_t[0], d_t[1], d_t[2], d_t[3], d_t[4]]
    extras = {"forces": forces, "chain": chain, "dt_ds": dt_ds}
    return rates, extras


def spatial_derivatives(x, u, kappa, vp, tp, pp):
    """Arc-length-domain state derivatives dx/ds and diagnostics.

    The time-domain rates scaled by dt/ds; in particular the heading error
    rate becomes psi_dot*dt/ds - kappa.
    """
    rates, extras = time_derivatives(x, u, kappa, vp, tp, pp)
    dt_ds = extras["dt_ds"]
    return [r * dt_ds for r in rates], extras
