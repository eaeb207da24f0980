"""Lumped-parameter thermal network of the electric powertrain.

Five thermal states are tracked: machine winding/stator lump T_M, inverter
lump T_I, battery lump T_B, and the fluid lumps of the two cooling circuits,
T_F1 (machines plus inverters) and T_F2 (battery). The drivetrain carries two
machines and two inverters sharing circuit 1; their paired heat input shows
up as the factor 2 in the circuit balance.

Coolant temperatures along circuit 1 are algebraic: the fluid leaves the
reservoir at T_F1, warms across the inverter plates to T_F1_M, warms across
the machine jackets to T_F1_RMI and returns through the radiator. Components
exchange heat with the mean fluid temperature of their passage.

Temperatures are degrees Celsius; only differences enter the equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "MotorGeometry",
    "ThermalParams",
    "TempLimits",
    "machine_resistance",
    "surface_resistance",
    "circuit_temperatures",
    "thermal_rates",
    "equilibrium_temperatures",
]


@dataclass(frozen=True)
class MotorGeometry:
    """Radial build of one electric machine, for its thermal resistance.

    Radii are measured from the shaft axis: r1 rotor bore, r2 rotor surface,
    r3 stator bore, r4 stator outer surface. Heat leaves through two parallel
    paths: outward through the stator iron into the cooling jacket, and
    inward across the air gap through the rotor.
    """

    r1: float        # rotor inner radius [m]
    r2: float        # rotor outer radius [m]
    r3: float        # stator inner radius [m]
    r4: float        # stator outer radius [m]
    length: float    # active iron length [m]
    k_iro: float     # iron thermal conductivity [W/(m K)]
    h_fluid: float   # jacket film coefficient [W/(m^2 K)]
    h_gap: float     # air gap film coefficient [W/(m^2 K)]

    def __post_init__(self):
        if not 0.0 < self.r1 < self.r2 < self.r3 < self.r4:
            raise ParameterError("machine radii must satisfy 0 < r1 < r2 < r3 < r4")
        if min(self.length, self.k_iro, self.h_fluid, self.h_gap) <= 0.0:
            raise ParameterError("machine length, conductivity and film coefficients must be positive")


def machine_resistance(geom):
    """Lumped winding-to-coolant resistance of one machine [K/W].

    Two parallel paths: conduction through the stator yoke plus convection
    into the jacket fluid, and conduction through the rotor plus convection
    across the air gap.
    """
    g = geom
    two_pi_l = 2.0 * np.pi * g.length
    r_out = (np.log(g.r4 / g.r3) / (two_pi_l * g.k_iro)
             + 1.0 / (two_pi_l * g.r4 * g.h_fluid))
    r_in = (np.log(g.r2 / g.r1) / (two_pi_l * g.k_iro)
            + 1.0 / (2.0 * two_pi_l * g.k_iro)
            + 1.0 / (two_pi_l * g.r3 * g.h_gap))
    return float(r_out * r_in / (r_out + r_in))


def surface_resistance(area, h):
    """Convective film resistance 1/(h*A) of a cooled surface [K/W]."""
    if area <= 0.0 or h <= 0.0:
        raise ParameterError("surface area and film coefficient must be positive")
    return 1.0 / (area * h)


@dataclass(frozen=True)
class ThermalParams:
    """Capacities, resistances and coolant data of the full network."""

    c_m: float       # one machine lump [J/K]
    c_i: float       # one inverter lump [J/K]
    c_b: float       # battery lump [J/K]
    c_f1: float      # drive circuit fluid lump [J/K]
    c_f2: float      # battery circuit fluid lump [J/K]
    r_m: float       # machine to circuit-1 fluid [K/W]
    r_i: float       # inverter to circuit-1 fluid [K/W]
    r_b: float       # battery to circuit-2 fluid [K/W]
    r_rmi: float     # circuit-1 radiator to ambient [K/W]
    r_rb: float      # circuit-2 radiator to ambient [K/W]
    mdot_f1: float   # circuit-1 coolant mass flow [kg/s]
    c_fluid: float   # coolant specific heat [J/(kg K)]
    t_env: float     # ambient temperature [degC]

    def __post_init__(self):
        caps = (self.c_m, self.c_i, self.c_b, self.c_f1, self.c_f2)
        ress = (self.r_m, self.r_i, self.r_b, self.r_rmi, self.r_rb)
        if min(caps) <= 0.0:
            raise ParameterError("thermal capacities must be positive")
        if min(ress) <= 0.0:
            raise ParameterError("thermal resistances must be positive")
        if self.mdot_f1 <= 0.0 or self.c_fluid <= 0.0:
            raise ParameterError("coolant mass flow and specific heat must be positive")
        # the radiator outlet relation divides by (2*mdot*c*R - 1); the model
        # is only meaningful when the flow carries more than the radiator
        # conductance can short-circuit
        if 2.0 * self.mdot_f1 * self.c_fluid * self.r_rmi <= 1.0:
            raise ParameterError(
                "circuit-1 radiator too strong for its coolant flow: "
                "2*mdot*c*R_rmi must exceed 1")

    @property
    def mdot_c(self):
        """Coolant capacity flow of circuit 1 [W/K]."""
        return self.mdot_f1 * self.c_fluid


@dataclass(frozen=True)
class TempLimits:
    """Operating temperature boxes for the five thermal states [degC]."""

    t_m_max: float = 180.0
    t_i_max: float = 100.0
    t_b_max: float = 50.0
    t_f1_max: float = 90.0
    t_f2_max: float = 65.0
    t_min: float = -20.0

    def __post_init__(self):
        highs = (self.t_m_max, self.t_i_max, self.t_b_max,
                 self.t_f1_max, self.t_f2_max)
        if any(h <= self.t_min for h in highs):
            raise ParameterError("upper temperature limits must exceed the lower limit")

    def upper(self):
        return np.array([self.t_m_max, self.t_i_max, self.t_b_max,
                         self.t_f1_max, self.t_f2_max])


def circuit_temperatures(t_m, t_i, t_f1, tp):
    """Algebraic fluid temperatures along cooling circuit 1.

    Returns (t_f1_m, t_f1_rmi, t_i_ref, t_m_ref): fluid after the inverter
    passage, fluid after the machine passage (radiator inlet), and the mean
    passage temperatures the inverter and machine lumps exchange against.
    Accepts arrays and autodiff duals.
    """
    mc = tp.mdot_c
    t_f1_m = (t_f1 * (mc * tp.r_i - 1.0) + 2.0 * t_i) / (1.0 + mc * tp.r_i)
    t_f1_rmi = ((t_f1 * (2.0 * mc * tp.r_rmi + 1.0) - 2.0 * tp.t_env)
                / (2.0 * mc * tp.r_rmi - 1.0))
    t_i_ref = 0.5 * (t_f1 + t_f1_m)
    t_m_ref = 0.5 * (t_f1_m + t_f1_rmi)
    return t_f1_m, t_f1_rmi, t_i_ref, t_m_ref


def thermal_rates(t_m, t_i, t_b, t_f1, t_f2, loss_m, loss_i, loss_b, tp):
    """Time derivatives of the five thermal states [K/s].

    loss_m and loss_i are per-component dissipations of one machine and one
    inverter; loss_b is the battery total. Accepts arrays and autodiff duals.
    """
    t_f1_m, t_f1_rmi, t_i_ref, t_m_ref = circuit_temperatures(t_m, t_i, t_f1, tp)
    p_col_m = (t_m - t_m_ref) / tp.r_m
    p_col_i = (t_i - t_i_ref) / tp.r_i
    p_col_b = (t_b - t_f2) / tp.r_b
    radiator_1 = (0.5 * (t_f1_rmi + t_f1) - tp.t_env) / tp.r_rmi
    radiator_2 = (t_f2 - tp.t_env) / tp.r_rb
    d_t_m = (loss_m - p_col_m) / tp.c_m
    d_t_i = (loss_i - p_col_i) / tp.c_i
    d_t_b = (loss_b - p_col_b) / tp.c_b
    d_t_f1 = (2.0 * p_col_m + 2.0 * p_col_i - radiator_1) / tp.c_f1
    d_t_f2 = (p_col_b - radiator_2) / tp.c_f2
    return d_t_m, d_t_i, d_t_b, d_t_f1, d_t_f2


def equilibrium_temperatures(loss_m, loss_i, loss_b, tp):
    """Steady state of the network under constant dissipations [degC].

    Solves the linear balance assembled by probing the rate kernel, which
    is exact because the rates are affine in the temperatures.
    """
    base = np.zeros(5)
    b = -np.array(thermal_rates(*np.zeros(5), loss_m, loss_i, loss_b, tp))
    a = np.empty((5, 5))
    for j in range(5):
        probe = base.copy()
        probe[j] = 1.0
        a[:, j] = np.array(thermal_rates(*probe, loss_m, loss_i, loss_b, tp)) + b
    return np.linalg.solve(a, b)
