"""Structured key-value parameter files and their typed loaders.

Parameter files are flat `key = value` text with `#` comments, SI units
annotated in the comments. Loaders check completeness both ways: every
required key must be present and unknown keys are rejected.
"""

from __future__ import annotations

from .errors import DataError, InputError
from .powerloss import BatteryParams, LossFit, PowertrainParams
from .thermal import MotorGeometry, TempLimits, ThermalParams, machine_resistance, surface_resistance
from .vehicle import VehicleParams

__all__ = [
    "parse_kv_file",
    "parse_kv_text",
    "load_vehicle_params",
    "load_thermal_params",
    "load_powertrain_params",
]


def parse_kv_text(text, origin="<string>"):
    """Parse flat `key = value` lines; `#` starts a comment anywhere."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{origin}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise DataError(f"{origin}:{lineno}: empty key or value")
        if key in out:
            raise DataError(f"{origin}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_kv_file(path):
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot open parameter file {path}: {exc}") from exc
    return parse_kv_text(text, origin=str(path))


class _KeySet(object):
    """Typed extraction from a parsed key-value map with completeness checks."""

    def __init__(self, mapping, origin):
        self.mapping = dict(mapping)
        self.origin = origin
        self.seen = set()

    def get_float(self, key, default=None):
        self.seen.add(key)
        if key not in self.mapping:
            if default is not None:
                return float(default)
            raise DataError(f"{self.origin}: missing required key {key!r}")
        try:
            return float(self.mapping[key])
        except ValueError as exc:
            raise DataError(
                f"{self.origin}: key {key!r} is not a number: "
                f"{self.mapping[key]!r}") from exc

    def finish(self):
        unknown = sorted(set(self.mapping) - self.seen)
        if unknown:
            raise DataError(
                f"{self.origin}: unknown keys {', '.join(unknown)}")


def load_vehicle_params(path):
    """Vehicle data file -> VehicleParams."""
    ks = _KeySet(parse_kv_file(path), str(path))
    vp = VehicleParams(
        mass=ks.get_float("mass"),
        i_z=ks.get_float("i_z"),
        l_f=ks.get_float("l_f"),
        l_r=ks.get_float("l_r"),
        h_cog=ks.get_float("h_cog"),
        width=ks.get_float("width"),
        mu=ks.get_float("mu"),
        c_alpha_f=ks.get_float("c_alpha_f"),
        c_alpha_r=ks.get_float("c_alpha_r"),
        c_d_a=ks.get_float("c_d_a"),
        rho_air=ks.get_float("rho_air"),
        c_roll=ks.get_float("c_roll"),
        p_max=ks.get_float("p_max"),
        f_d_max=ks.get_float("f_d_max"),
        f_b_max=ks.get_float("f_b_max"),
        delta_max=ks.get_float("delta_max"),
        gamma_max=ks.get_float("gamma_max"),
        brake_front=ks.get_float("brake_front"),
        v_min=ks.get_float("v_min"),
        v_max=ks.get_float("v_max"),
    )
    ks.finish()
    return vp


def load_thermal_params(path):
    """Thermal data file -> (ThermalParams, TempLimits).

    Component resistances are derived from the raw build data: the machine
    resistance from its radial geometry, the plate and radiator resistances
    from area and film coefficient.
    """
    ks = _KeySet(parse_kv_file(path), str(path))
    geom = MotorGeometry(
        r1=ks.get_float("machine_r1"),
        r2=ks.get_float("machine_r2"),
        r3=ks.get_float("machine_r3"),
        r4=ks.get_float("machine_r4"),
        length=ks.get_float("machine_length"),
        k_iro=ks.get_float("machine_k_iro"),
        h_fluid=ks.get_float("machine_h_fluid"),
        h_gap=ks.get_float("machine_h_gap"),
    )
    tp = ThermalParams(
        c_m=ks.get_float("c_m"),
        c_i=ks.get_float("c_i"),
        c_b=ks.get_float("c_b"),
        c_f1=ks.get_float("c_f1"),
        c_f2=ks.get_float("c_f2"),
        r_m=machine_resistance(geom),
        r_i=surface_resistance(ks.get_float("inverter_area"),
                               ks.get_float("inverter_h")),
        r_b=surface_resistance(ks.get_float("battery_area"),
                               ks.get_float("battery_h")),
        r_rmi=surface_resistance(ks.get_float("radiator_mi_area"),
                                 ks.get_float("radiator_mi_h")),
        r_rb=surface_resistance(ks.get_float("radiator_b_area"),
                                ks.get_float("radiator_b_h")),
        mdot_f1=ks.get_float("mdot_f1"),
        c_fluid=ks.get_float("c_fluid"),
        t_env=ks.get_float("t_env"),
    )
    limits = TempLimits(
        t_m_max=ks.get_float("t_m_max", 180.0),
        t_i_max=ks.get_float("t_i_max", 100.0),
        t_b_max=ks.get_float("t_b_max", 50.0),
        t_f1_max=ks.get_float("t_f1_max", 90.0),
        t_f2_max=ks.get_float("t_f2_max", 65.0),
        t_min=ks.get_float("t_min", -20.0),
    )
    ks.finish()
    return tp, limits


def load_powertrain_params(path):
    """Powertrain loss data file -> PowertrainParams."""
    ks = _KeySet(parse_kv_file(path), str(path))
    pp = PowertrainParams(
        machine_fit=LossFit.from_coefficients(
            "machine",
            ks.get_float("machine_a"),
            ks.get_float("machine_b"),
            ks.get_float("machine_c")),
        inverter_fit=LossFit.from_coefficients(
            "inverter",
            ks.get_float("inverter_a"),
            ks.get_float("inverter_b"),
            ks.get_float("inverter_c")),
        battery=BatteryParams(
            u_ocv=ks.get_float("u_ocv"),
            r_i=ks.get_float("r_i"),
            feas_margin=ks.get_float("feas_margin", 0.98)),
        aux_power=ks.get_float("aux_power", 0.0),
    )
    ks.finish()
    return pp
