"""Scenario files: one key-value file wiring a whole race computation.

A scenario names the track and parameter files (paths resolved relative to
the scenario file), the lap count, the boundary preset and the solver and
verification options. `load_scenario` parses and validates; `resolve` loads
every referenced file into ready-to-use parameter objects and can archive
the exact inputs next to the outputs for reproducibility.
"""

from __future__ import annotations

import os
import shutil
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InputError
from .ocp import BoundarySpec, OcpOptions
from .params import (load_powertrain_params, load_thermal_params,
                     load_vehicle_params, parse_kv_file)
from .solver import SolverOptions
from .track import MeshOptions, load_track

__all__ = [
    "PRESET_COLD",
    "PRESET_HOT",
    "ScenarioConfig",
    "ResolvedScenario",
    "load_scenario",
    "boundary_from_spec",
    "resolve",
    "bundled_path",
]

# initial temperatures (T_M, T_I, T_B, T_F1, T_F2) [degC]
PRESET_COLD = (30.0, 30.0, 30.0, 30.0, 30.0)
PRESET_HOT = (100.0, 70.0, 48.0, 55.0, 40.0)

_BOOL_WORDS = {"true": True, "yes": True, "1": True,
               "false": False, "no": False, "0": False}


def bundled_path(name):
    """Absolute path of a file shipped in the package data directory."""
    return os.path.join(os.path.dirname(__file__), "data", name)


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed scenario file, paths resolved but files not yet loaded."""

    track_path: str
    vehicle_path: str
    thermal_path: str
    powertrain_path: str
    laps: int
    boundary: str                 # "cold" | "hot" | path to a custom file
    mesh: MeshOptions
    ocp: OcpOptions
    solver: SolverOptions
    dt: float = 1e-3              # verification step [s]
    name: str = "scenario"
    origin: str = "<memory>"      # scenario file path, for input archiving

    def input_paths(self):
        paths = [self.track_path, self.vehicle_path, self.thermal_path,
                 self.powertrain_path]
        if self.boundary not in ("cold", "hot"):
            paths.append(self.boundary)
        if os.path.exists(self.origin):
            paths.append(self.origin)
        return paths


@dataclass(frozen=True)
class ResolvedScenario:
    """Scenario with every referenced file loaded."""

    config: ScenarioConfig
    track: object
    vehicle: object
    thermal: object
    limits: object
    powertrain: object
    boundary: BoundarySpec

    def archive_inputs(self, out_dir):
        """Copy the scenario and its referenced files to out_dir/inputs."""
        dest = os.path.join(out_dir, "inputs")
        os.makedirs(dest, exist_ok=True)
        for path in self.config.input_paths():
            try:
                shutil.copy2(path, dest)
            except OSError as exc:
                raise InputError(f"cannot archive input {path}: {exc}") from exc
        return dest


class _Keys:
    """Typed access to a parsed key-value map with completeness checks."""

    def __init__(self, mapping, origin):
        self.mapping = dict(mapping)
        self.origin = origin
        self.seen = set()

    def _raw(self, key, default):
        self.seen.add(key)
        if key not in self.mapping:
            if default is None:
                raise DataError(f"{self.origin}: missing required key {key!r}")
            return None
        return self.mapping[key]

    def get_str(self, key, default=None):
        raw = self._raw(key, default)
        return default if raw is None else raw

    def get_float(self, key, default=None):
        raw = self._raw(key, default)
        if raw is None:
            return float(default)
        try:
            return float(raw)
        except ValueError as exc:
            raise DataError(f"{self.origin}: key {key!r} is not a number: "
                            f"{raw!r}") from exc

    def get_int(self, key, default=None):
        value = self.get_float(key, default)
        if value != int(value):
            raise DataError(f"{self.origin}: key {key!r} must be an integer")
        return int(value)

    def get_bool(self, key, default=None):
        raw = self._raw(key, default)
        if raw is None:
            return bool(default)
        word = str(raw).strip().lower()
        if word not in _BOOL_WORDS:
            raise DataError(f"{self.origin}: key {key!r} must be a boolean, "
                            f"got {raw!r}")
        return _BOOL_WORDS[word]

    def finish(self):
        unknown = sorted(set(self.mapping) - self.seen)
        if unknown:
            raise DataError(
                f"{self.origin}: unknown keys {', '.join(unknown)}")


def load_scenario(path):
    """Parse a scenario file into a ScenarioConfig."""
    ks = _Keys(parse_kv_file(path), str(path))
    base = os.path.dirname(os.path.abspath(path))

    def rel(p):
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(base, p))

    track_path = rel(ks.get_str("track"))
    vehicle_path = rel(ks.get_str("vehicle"))
    thermal_path = rel(ks.get_str("thermal"))
    powertrain_path = rel(ks.get_str("powertrain"))
    laps = ks.get_int("laps", 1)
    if laps < 1:
        raise DataError(f"{path}: laps must be at least 1")
    boundary = ks.get_str("boundary")
    if boundary not in ("cold", "hot"):
        boundary = rel(boundary)

    mesh = MeshOptions(
        ds_fine=ks.get_float("ds_fine", MeshOptions.ds_fine),
        ds_coarse=ks.get_float("ds_coarse", MeshOptions.ds_coarse),
        kappa_threshold=ks.get_float("kappa_threshold",
                                     MeshOptions.kappa_threshold),
        max_step_ratio=ks.get_float("max_step_ratio",
                                    MeshOptions.max_step_ratio),
        blend_ratio=ks.get_float("blend_ratio", MeshOptions.blend_ratio),
    )
    ocp = OcpOptions(
        grip_usage_max=ks.get_float("grip_usage_max",
                                    OcpOptions.grip_usage_max),
        reg_steer_rate=ks.get_float("reg_steer_rate",
                                    OcpOptions.reg_steer_rate),
        relax_thermal=ks.get_bool("relax_thermal", False),
    )
    solver = SolverOptions(
        tol_feas=ks.get_float("tol_feas", SolverOptions.tol_feas),
        tol_opt=ks.get_float("tol_opt", SolverOptions.tol_opt),
        max_iter=ks.get_int("max_iter", SolverOptions.max_iter),
    )
    dt = ks.get_float("dt", 1e-3)
    if dt <= 0.0:
        raise DataError(f"{path}: dt must be positive")
    name = ks.get_str("name", os.path.splitext(os.path.basename(path))[0])
    ks.finish()
    return ScenarioConfig(
        track_path=track_path, vehicle_path=vehicle_path,
        thermal_path=thermal_path, powertrain_path=powertrain_path,
        laps=laps, boundary=boundary, mesh=mesh, ocp=ocp, solver=solver,
        dt=dt, name=name, origin=os.path.abspath(path))


def boundary_from_spec(boundary, name):
    """Boundary preset name or custom temperature file -> BoundarySpec."""
    if boundary == "cold":
        return BoundarySpec(t0=np.array(PRESET_COLD), cyclic=True, name=name)
    if boundary == "hot":
        return BoundarySpec(t0=np.array(PRESET_HOT), cyclic=True, name=name)
    ks = _Keys(parse_kv_file(boundary), str(boundary))
    t0 = np.array([ks.get_float("t0_m"), ks.get_float("t0_i"),
                   ks.get_float("t0_b"), ks.get_float("t0_f1"),
                   ks.get_float("t0_f2")])
    ks.finish()
    return BoundarySpec(t0=t0, cyclic=True, name=name)


def resolve(config):
    """Load every file a ScenarioConfig references."""
    track = load_track(config.track_path)
    vehicle = load_vehicle_params(config.vehicle_path)
    thermal, limits = load_thermal_params(config.thermal_path)
    powertrain = load_powertrain_params(config.powertrain_path)
    boundary = boundary_from_spec(config.boundary, config.name)
    return ResolvedScenario(
        config=config, track=track, vehicle=vehicle, thermal=thermal,
        limits=limits, powertrain=powertrain, boundary=boundary)
