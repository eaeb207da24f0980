"""Single-track vehicle model in a curvilinear track frame.

Driving states are speed v, sideslip beta, yaw rate psi_dot, lateral offset n
from the centerline (positive left) and heading error xi between vehicle and
track tangent. Controls are total drive force f_d >= 0, total brake force
f_b <= 0, steer angle delta and the quasi-static pitch load transfer gamma.

Forces use a saturating lateral tire law on each axle and a friction circle
ties longitudinal and lateral contact forces to the vertical load. The drive
axle is the rear; brake force splits between axles by a fixed balance.

All kernels are written against numpy ufuncs so they evaluate equally on
float arrays and on autodiff duals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "G",
    "VehicleParams",
    "axle_loads",
    "slip_angles",
    "lateral_force",
    "vehicle_forces",
    "vehicle_rates",
    "friction_circle_usage",
    "time_scale",
    "load_transfer",
]

G = 9.81  # gravitational acceleration [m/s^2]


@dataclass(frozen=True)
class VehicleParams:
    """Mass, geometry, tire and actuator data of the single-track model."""

    mass: float          # total vehicle mass [kg]
    i_z: float           # yaw inertia [kg m^2]
    l_f: float           # cog to front axle [m]
    l_r: float           # cog to rear axle [m]
    h_cog: float         # cog height [m]
    width: float         # track occupation width of the car [m]
    mu: float            # tire friction coefficient [-]
    c_alpha_f: float     # front axle cornering stiffness [N/rad]
    c_alpha_r: float     # rear axle cornering stiffness [N/rad]
    c_d_a: float         # drag coefficient times frontal area [m^2]
    rho_air: float       # air density [kg/m^3]
    c_roll: float        # rolling resistance coefficient [-]
    p_max: float         # drivetrain power cap at the wheels [W]
    f_d_max: float       # peak total drive force [N]
    f_b_max: float       # peak total brake force, negative [N]
    delta_max: float     # steer angle limit [rad]
    gamma_max: float     # load transfer fraction limit [-]
    brake_front: float   # fraction of brake force on the front axle [-]
    v_min: float         # lower speed bound keeping the model regular [m/s]
    v_max: float         # upper speed bound [m/s]

    def __post_init__(self):
        if min(self.mass, self.i_z, self.l_f, self.l_r, self.h_cog,
               self.width, self.mu, self.c_alpha_f, self.c_alpha_r,
               self.c_d_a, self.rho_air) <= 0.0:
            raise ParameterError("vehicle mass, geometry and tire data must be positive")
        if self.c_roll < 0.0:
            raise ParameterError("rolling resistance must be non-negative")
        if self.p_max <= 0.0 or self.f_d_max <= 0.0 or self.f_b_max >= 0.0:
            raise ParameterError("need p_max > 0, f_d_max > 0 and f_b_max < 0")
        if self.delta_max <= 0.0 or self.gamma_max <= 0.0:
            raise ParameterError("steer and load transfer limits must be positive")
        if not 0.0 <= self.brake_front <= 1.0:
            raise ParameterError("front brake fraction must lie in [0, 1]")
        if not 0.0 < self.v_min < self.v_max:
            raise ParameterError("need 0 < v_min < v_max")

    @property
    def wheelbase(self):
        return self.l_f + self.l_r


def load_transfer(f_d, f_b, vp):
    """Quasi-static pitch load transfer fraction from the net drive force.

    Positive under acceleration (rear axle gains load). The optimizer carries
    gamma as its own control and enforces this relation as a constraint, so
    the vertical loads stay an explicit algebraic quantity.
    """
    return (f_d + f_b) * vp.h_cog / (vp.wheelbase * vp.mass * G)


def axle_loads(gamma, vp):
    """Vertical loads (front, rear) at load transfer gamma [N]."""
    w = vp.mass * G
    f_zf = w * (vp.l_r / vp.wheelbase) - gamma * w
    f_zr = w * (vp.l_f / vp.wheelbase) + gamma * w
    return f_zf, f_zr


def slip_angles(v, beta, psi_dot, delta, vp):
    """Axle slip angles (front, rear) of the single track model [rad]."""
    vx = v * np.cos(beta)
    vy = v * np.sin(beta)
    alpha_f = delta - np.arctan((vy + vp.l_f * psi_dot) / vx)
    alpha_r = -np.arctan((vy - vp.l_r * psi_dot) / vx)
    return alpha_f, alpha_r


def lateral_force(alpha, f_z, c_alpha, mu):
    """Saturating lateral tire force of one axle [N].

    Linear in the slip angle for small angles with stiffness c_alpha and
    saturating smoothly at the friction limit mu*f_z.
    """
    cap = mu * f_z
    return cap * np.tanh(c_alpha * alpha / cap)


def vehicle_forces(v, beta, psi_dot, f_d, f_b, delta, gamma, vp):
    """All contact and body forces of the single-track model.

    Returns a dict with per-axle longitudinal (wheel frame), lateral and
    vertical forces plus aerodynamic drag. Drive force acts on the rear
    axle; brake force splits by the fixed balance; rolling resistance loads
    each axle in proportion to its vertical force.
    """
    f_zf, f_zr = axle_loads(gamma, vp)
    alpha_f, alpha_r = slip_angles(v, beta, psi_dot, delta, vp)
    f_yf = lateral_force(alpha_f, f_zf, vp.c_alpha_f, vp.mu)
    f_yr = lateral_force(alpha_r, f_zr, vp.c_alpha_r, vp.mu)
    f_xf = vp.brake_front * f_b - vp.c_roll * f_zf
    f_xr = f_d + (1.0 - vp.brake_front) * f_b - vp.c_roll * f_zr
    drag = 0.5 * vp.rho_air * vp.c_d_a * v * v
    return {"f_xf": f_xf, "f_yf": f_yf, "f_zf": f_zf,
            "f_xr": f_xr, "f_yr": f_yr, "f_zr": f_zr, "drag": drag}


def vehicle_rates(v, beta, psi_dot, f_d, f_b, delta, gamma, vp, forces=None):
    """Time derivatives (dv, dbeta, dpsi_dot) of the driving states.

    Body-frame force sums are projected onto the velocity direction for the
    speed equation and across it for the sideslip equation.
    """
    if forces is None:
        forces = vehicle_forces(v, beta, psi_dot, f_d, f_b, delta, gamma, vp)
    cos_d, sin_d = np.cos(delta), np.sin(delta)
    sum_fx = (forces["f_xf"] * cos_d - forces["f_yf"] * sin_d
              + forces["f_xr"] - forces["drag"])
    sum_fy = forces["f_xf"] * sin_d + forces["f_yf"] * cos_d + forces["f_yr"]
    moment = (vp.l_f * (forces["f_xf"] * sin_d + forces["f_yf"] * cos_d)
              - vp.l_r * forces["f_yr"])
    cos_b, sin_b = np.cos(beta), np.sin(beta)
    dv = (sum_fx * cos_b + sum_fy * sin_b) / vp.mass
    dbeta = (sum_fy * cos_b - sum_fx * sin_b) / (vp.mass * v) - psi_dot
    dpsi_dot = moment / vp.i_z
    return dv, dbeta, dpsi_dot


def friction_circle_usage(f_x, f_y, f_z, mu):
    """Squared utilization of one axle's friction circle.

    (f_x^2 + f_y^2) / (mu*f_z)^2, so values above 1 exceed the grip limit.
    """
    cap = mu * f_z
    return (f_x * f_x + f_y * f_y) / (cap * cap)


def time_scale(v, beta, n, xi, kappa):
    """dt/ds along the track: seconds the car spends per meter of centerline.

    Valid while the car stays ahead of the local curvature center
    (1 - n*kappa > 0) and its velocity keeps a forward component along the
    track tangent (|xi + beta| < pi/2). The optimizer's variable bounds keep
    iterates inside this region.
    """
    return (1.0 - n * kappa) / (v * np.cos(xi + beta))
