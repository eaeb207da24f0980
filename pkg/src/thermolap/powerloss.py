"""Power loss meta-models for the electric powertrain components.

Machine and inverter losses come from a quadratic input-power map fitted to
bench measurements: p_in = a*p_out**2 + b*p_out + c. The battery follows the
open-circuit law with ohmic internal resistance, which yields a closed form
for the internal (chemical) power drawn at a demanded terminal power.

All powers are in watts internally. File interfaces accept watt or kilowatt
columns, declared by the header suffix.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError

__all__ = [
    "MeasurementSet",
    "LossFit",
    "BatteryParams",
    "PowertrainParams",
    "fit_loss_model",
    "fit_parabola",
    "input_power",
    "eval_poly_input",
    "loss_power",
    "component_loss",
    "battery_input_power",
    "battery_loss",
    "battery_power_limit",
    "load_measurements",
    "save_measurements",
    "generate_measurements",
]


@dataclass(frozen=True)
class MeasurementSet:
    """Bench measurement pairs for one powertrain component."""

    component: str
    p_out: np.ndarray  # delivered output power [W]
    p_in: np.ndarray   # drawn input power [W]

    def __post_init__(self):
        if self.p_out.shape != self.p_in.shape or self.p_out.ndim != 1:
            raise DataError("measurement columns must be equal-length 1-d arrays")
        if self.p_out.size < 3:
            raise DataError("need at least 3 measurement points to fit a parabola")


@dataclass(frozen=True)
class LossFit:
    """Quadratic input-power map p_in = a*p_out**2 + b*p_out + c.

    a [1/W], b [-], c [W]. mse is the raw mean squared residual [W^2],
    nrmse the root of it normalized by the mean absolute input power.
    """

    component: str
    a: float
    b: float
    c: float
    mse: float
    nrmse: float
    n_points: int
    p_out_min: float
    p_out_max: float

    def __post_init__(self):
        if not np.isfinite([self.a, self.b, self.c]).all():
            raise ParameterError("loss fit coefficients must be finite")

    @classmethod
    def from_coefficients(cls, component, a, b, c):
        """Fit record from known coefficients, without measurement metadata."""
        return cls(component=component, a=float(a), b=float(b), c=float(c),
                   mse=0.0, nrmse=0.0, n_points=0,
                   p_out_min=float("nan"), p_out_max=float("nan"))


@dataclass(frozen=True)
class BatteryParams:
    """Open-circuit battery model with ohmic internal resistance."""

    u_ocv: float             # open circuit voltage [V]
    r_i: float               # internal resistance [ohm]
    feas_margin: float = 0.98    # usable fraction of the hard power limit
    disc_floor_frac: float = 0.0025  # switch point of the sqrt extension, as a fraction of u_ocv**2

    def __post_init__(self):
        if self.u_ocv <= 0.0 or self.r_i <= 0.0:
            raise ParameterError("battery voltage and resistance must be positive")
        if not 0.0 < self.feas_margin < 1.0:
            raise ParameterError("battery feasibility margin must lie in (0, 1)")
        if not 0.0 < self.disc_floor_frac < 1.0:
            raise ParameterError("discriminant floor fraction must lie in (0, 1)")


@dataclass(frozen=True)
class PowertrainParams:
    """Loss models of the full electric drivetrain.

    The drivetrain carries two machine/inverter pairs; the chain evaluation
    splits wheel power evenly between them. aux_power is a constant board
    net load drawn from the battery terminals [W].
    """

    machine_fit: LossFit
    inverter_fit: LossFit
    battery: BatteryParams
    aux_power: float = 0.0

    def __post_init__(self):
        if self.aux_power < 0.0:
            raise ParameterError("auxiliary power must be non-negative")


def fit_loss_model(measurements):
    """Least-squares parabola through (p_out, p_in) measurement pairs.

    The regression runs on standardized powers so the normal equations stay
    well conditioned even for inputs in the hundreds of kilowatts, then the
    coefficients are mapped back to the raw watt basis.
    """
    p = measurements.p_out.astype(float)
    q = measurements.p_in.astype(float)
    mu = p.mean()
    sig = p.std()
    if sig == 0.0:
        raise DataError("measurements must span a range of output powers")
    t = (p - mu) / sig
    vand = np.column_stack([t * t, t, np.ones_like(t)])
    coef, _, _, _ = np.linalg.lstsq(vand, q, rcond=None)
    at, bt, ct = coef
    # expand a*((p-mu)/sig)^2 + b*(p-mu)/sig + c back to powers of p
    a = at / sig ** 2
    b = bt / sig - 2.0 * at * mu / sig ** 2
    c = ct - bt * mu / sig + at * mu ** 2 / sig ** 2
    resid = q - (a * p * p + b * p + c)
    mse = float(np.mean(resid ** 2))
    scale = float(np.mean(np.abs(q)))
    nrmse = float(np.sqrt(mse) / scale) if scale > 0.0 else float("nan")
    return LossFit(
        component=measurements.component,
        a=float(a), b=float(b), c=float(c),
        mse=mse, nrmse=nrmse, n_points=int(p.size),
        p_out_min=float(p.min()), p_out_max=float(p.max()),
    )


# canonical short name: the fit is a least-squares parabola
fit_parabola = fit_loss_model


def input_power(fit, p_out):
    """Input power drawn by a component delivering p_out [W].

    Works elementwise on arrays and on autodiff duals alike.
    """
    return fit.a * p_out * p_out + fit.b * p_out + fit.c


def loss_power(fit, p_out):
    """Dissipated power of a fitted component at output power p_out [W]."""
    return fit.a * p_out * p_out + (fit.b - 1.0) * p_out + fit.c


def eval_poly_input(fit, p_out):
    """input_power with an out-of-range warning for standalone use.

    Warns (never rejects) when p_out falls outside the fitted measurement
    range; fits built directly from coefficients carry no range and never
    warn. Hot paths call input_power, which skips the check.
    """
    lo, hi = fit.p_out_min, fit.p_out_max
    if np.isfinite(lo) and np.isfinite(hi):
        p = np.asarray(p_out, dtype=float)
        if bool((p < lo).any() or (p > hi).any()):
            warnings.warn(
                f"{fit.component}: output power outside the fitted range "
                f"[{lo:.6g}, {hi:.6g}] W", stacklevel=2)
    return input_power(fit, p_out)


def component_loss(p_in, p_out):
    """Dissipated power of a component drawing p_in while delivering p_out."""
    return p_in - p_out


def battery_power_limit(bp):
    """Hard terminal power ceiling u**2 / (4 r) of the open-circuit model [W]."""
    return bp.u_ocv ** 2 / (4.0 * bp.r_i)


def _sqrt_extended(q, floor):
    """sqrt(q) for q >= floor, cubic Taylor continuation below.

    The continuation matches value, slope and curvature at the floor, so the
    composite map is twice continuously differentiable everywhere and stays
    defined for the infeasible powers an optimizer may probe transiently.
    """
    from . import autodiff as ad

    r = np.sqrt(floor)
    d = q - floor
    taylor = r + d / (2.0 * r) - d * d / (8.0 * r ** 3) + d ** 3 / (16.0 * r ** 5)
    if isinstance(q, ad.Dual):
        mask = q.val >= floor
        safe = ad.where(mask, q, ad.Dual.constant(
            np.full_like(q.val, floor), q.jac.shape[1], q.hess is not None))
        return ad.where(mask, np.sqrt(safe), taylor)
    q = np.asarray(q, dtype=float)
    mask = q >= floor
    return np.where(mask, np.sqrt(np.where(mask, q, floor)), taylor)


def battery_input_power(bp, p_out):
    """Internal chemical power when the battery delivers p_out at its terminals.

    Closed form from the ohmic circuit: the cell current solves
    r*i**2 - u*i + p_out = 0, and the internal power is u*i for the smaller
    (physical) root. Above the feasibility limit the square root argument is
    continued smoothly; the optimizer carries a separate inequality that keeps
    converged solutions out of that region.
    """
    u = bp.u_ocv
    r = bp.r_i
    disc = u * u - 4.0 * p_out * r
    floor = bp.disc_floor_frac * u * u
    root = _sqrt_extended(disc, floor)
    return u * u / (2.0 * r) - u * root / (2.0 * r)


def battery_loss(bp, p_out):
    """Ohmic dissipation of the battery at terminal power p_out [W]."""
    return battery_input_power(bp, p_out) - p_out


# ----------------------------------------------------------------------
# measurement file handling

_UNIT_FACTORS = {"w": 1.0, "kw": 1e3}


def _parse_power_header(fields):
    """Map a measurement header to per-column watt conversion factors."""
    if len(fields) != 2:
        raise DataError("measurement files need exactly two columns")
    factors = []
    for name, stem in zip(fields, ("p_out", "p_in")):
        name = name.strip().lower()
        if not name.startswith(stem + "_"):
            raise DataError(
                f"expected a '{stem}_<unit>' column, got {name!r}")
        unit = name[len(stem) + 1:]
        if unit not in _UNIT_FACTORS:
            raise DataError(f"unsupported power unit {unit!r} in header")
        factors.append(_UNIT_FACTORS[unit])
    return factors


def load_measurements(path, component="component"):
    """Read measurement pairs from a delimited text file.

    The header row declares units per column, e.g. p_out_w,p_in_w or
    p_out_kw,p_in_kw. Values are converted to watts.
    """
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        from .errors import InputError
        raise InputError(f"cannot open measurement file {path}: {exc}") from exc
    with fh:
        rows = [r for r in csv.reader(fh)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataError(f"measurement file {path} is empty")
    f_out, f_in = _parse_power_header(rows[0])
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise DataError(f"malformed measurement row in {path}: {exc}") from exc
    if data.size == 0:
        raise DataError(f"measurement file {path} has a header but no data")
    return MeasurementSet(component=component,
                          p_out=data[:, 0] * f_out,
                          p_in=data[:, 1] * f_in)


def save_measurements(path, measurements):
    """Write measurement pairs with the canonical watt header."""
    with open(path, "w", newline="") as fh:
        fh.write("p_out_w,p_in_w\n")
        for po, pi in zip(measurements.p_out, measurements.p_in):
            fh.write(f"{po:.6f},{pi:.6f}\n")


def generate_measurements(component, a, b, c, p_min, p_max, n=60,
                          noise_frac=0.0, seed=0):
    """Synthesize bench measurements from known parabola coefficients.

    Points are spaced uniformly over [p_min, p_max] in watts; optional
    multiplicative Gaussian noise (fraction of each input power) emulates
    bench scatter. Deterministic for a fixed seed.
    """
    p_out = np.linspace(p_min, p_max, n)
    p_in = a * p_out ** 2 + b * p_out + c
    if noise_frac > 0.0:
        rng = np.random.default_rng(seed)
        p_in = p_in * (1.0 + noise_frac * rng.standard_normal(n))
    return MeasurementSet(component=component, p_out=p_out, p_in=p_in)
