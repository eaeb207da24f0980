"""Direct collocation transcription of the minimum-race-time problem.

The continuous problem runs over centerline arc length s: minimize the
total race time integral of dt/ds subject to the coupled vehicle-thermal
dynamics, actuator and grip limits, the drivetrain power cap, battery
feasibility and the temperature operating boxes.

Transcription uses implicit trapezoidal collocation on a curvature-adaptive
mesh. Decision variables are scaled states at the nodes interleaved with one
control vector per interval:

    z = [x_0, u_0, x_1, u_1, ..., u_{N-1}, x_N]

Interval k's control vector is attributed to its left node, and the applied
control varies linearly from node to node: the dynamics at interval k's ends
are evaluated with (x_k, u_k) and (x_{k+1}, u_{k+1}). On cyclic horizons the
final interval's right end wraps to u_0, closing the control trajectory
around the lap; on pinned horizons it clamps to u_{N-1}. The transcribed
control model is therefore exactly the piecewise linear interpolant the
time-domain verifier replays, so plan and simulation never disagree about
what the actuators were doing between nodes.

The constraint Jacobian stays banded by interval, with wrap-around coupling
when the lap closes cyclically. Path constraints are enforced at both ends
of every interval, so each constrained quantity is checked at every node
with the control acting there. First and second derivatives are exact,
computed by vectorized forward-mode autodiff over all evaluation points at
once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from . import dynamics, powerloss, vehicle
from .dynamics import CONTROL_NAMES, N_CONTROLS, N_STATES, STATE_NAMES
from .errors import ParameterError

__all__ = [
    "Scaling",
    "BoundarySpec",
    "OcpOptions",
    "NlpProblem",
    "build_nlp",
    "initial_guess",
    "power_chain",
]

# re-exported: the chain evaluation is part of this module's public surface
power_chain = dynamics.power_chain

NV = N_STATES + N_CONTROLS  # variables per interval block


@dataclass(frozen=True)
class Scaling:
    """Diagonal variable scaling between physical and solver units."""

    x: np.ndarray  # state scales, physical = scaled * x
    u: np.ndarray  # control scales

    def __post_init__(self):
        if self.x.shape != (N_STATES,) or self.u.shape != (N_CONTROLS,):
            raise ParameterError("scaling vectors have wrong shape")
        if (self.x <= 0.0).any() or (self.u <= 0.0).any():
            raise ParameterError("scale factors must be positive")

    @classmethod
    def default(cls, vp):
        x = np.array([50.0, 0.3, 1.0, 3.0, 0.3,
                      100.0, 100.0, 100.0, 100.0, 100.0])
        u = np.array([vp.f_d_max, -vp.f_b_max, vp.delta_max, vp.gamma_max])
        return cls(x=x, u=u)

    def scaled_by(self, factor):
        """Same scaling multiplied by a common positive constant."""
        return Scaling(x=self.x * factor, u=self.u * factor)


@dataclass(frozen=True)
class BoundarySpec:
    """Initial temperatures and the driving-state closure policy.

    Thermal states are pinned to t0 at the start line. Driving states close
    cyclically by default (flying lap: the car crosses the finish in the
    same motion state it started with); alternatively they pin to driving0.
    """

    t0: np.ndarray            # initial (T_M, T_I, T_B, T_F1, T_F2) [degC]
    cyclic: bool = True
    driving0: np.ndarray | None = None  # (v, beta, psidot, n, xi) when pinned
    name: str = "custom"

    def __post_init__(self):
        if np.asarray(self.t0).shape != (5,):
            raise ParameterError("boundary needs 5 initial temperatures")
        if not self.cyclic:
            if self.driving0 is None or np.asarray(self.driving0).shape != (5,):
                raise ParameterError("pinned boundary needs 5 initial driving states")


@dataclass(frozen=True)
class OcpOptions:
    """Transcription tuning knobs."""

    eps_excl: float = 0.01       # slack of the drive/brake exclusivity product
    relax_thermal: bool = False  # replace temperature boxes by the plausibility window
    relaxed_t_max: float = 250.0  # plausibility ceiling when relaxed [degC]
    beta_max: float = 0.40       # model validity box on sideslip [rad]
    psidot_max: float = 2.5      # model validity box on yaw rate [rad/s]
    xi_max: float = 0.60         # model validity box on heading error [rad]
    grip_usage_max: float = 1.0  # friction circle utilization ceiling [-]
    boundary_margin: float = 1e-3  # required distance of t0 from its box [K]
    # steering rate regularization weight [s/rad^2]: damps node-to-node
    # steering weave the collocation grid cannot see, at a time cost far
    # below the verification tolerance
    reg_steer_rate: float = 0.5


@dataclass
class EvalBundle:
    """First-order evaluation of the NLP at one point."""

    f: float
    grad: np.ndarray
    c_eq: np.ndarray
    c_ineq: np.ndarray
    j_eq: object      # csr_matrix or None for value-only bundles
    j_ineq: object


class NlpProblem(object):
    """Sparse NLP assembled from a mesh and the model parameter set.

    Exposes objective, constraints and their exact derivatives against the
    scaled variable vector. The sparsity patterns of the Jacobian and the
    Lagrangian Hessian are fixed at construction; evaluations only refresh
    the numeric values.
    """

    def __init__(self, mesh, vp, tp, pp, limits, boundary,
                 scaling=None, options=None):
        self.mesh = mesh
        self.vp = vp
        self.tp = tp
        self.pp = pp
        self.limits = limits
        self.boundary = boundary
        self.scaling = scaling or Scaling.default(vp)
        self.options = options or OcpOptions()

        self.n_int = mesh.n_intervals
        self.n_nodes = mesh.n_nodes
        self.n = NV * self.n_int + N_STATES
        self.m_eq = (N_STATES + 1) * self.n_int + 10
        self.m_ineq = 9 * self.n_int

        self._build_bounds()
        self._build_indices()
        self._build_regularizer()
        self._validate_boundary()

    # ------------------------------------------------------------------
    # layout helpers

    def state_offset(self, k):
        """First variable index of node k's state block."""
        return NV * k

    def control_offset(self, k):
        """First variable index of interval k's control block."""
        return NV * k + N_STATES

    def split(self, z):
        """Physical states (n_nodes, 10) and controls (n_int, 4) from z."""
        z = np.asarray(z, dtype=float)
        body = z[:NV * self.n_int].reshape(self.n_int, NV)
        x_scaled = np.vstack([body[:, :N_STATES], z[None, -N_STATES:]])
        u_scaled = body[:, N_STATES:]
        return x_scaled * self.scaling.x, u_scaled * self.scaling.u

    def assemble(self, x_phys, u_phys):
        """Scaled variable vector from physical state and control arrays."""
        xs = x_phys / self.scaling.x
        us = u_phys / self.scaling.u
        z = np.empty(self.n)
        for k in range(self.n_int):
            z[self.state_offset(k):self.state_offset(k) + N_STATES] = xs[k]
            z[self.control_offset(k):self.control_offset(k) + N_CONTROLS] = us[k]
        z[-N_STATES:] = xs[-1]
        return z

    # ------------------------------------------------------------------
    # construction

    def _build_bounds(self):
        opt = self.options
        vp, lim = self.vp, self.limits
        t_hi = np.full(5, opt.relaxed_t_max) if opt.relax_thermal else lim.upper()
        t_lo = np.full(5, lim.t_min)
        half_w = 0.5 * vp.width
        n_lo = -(self.mesh.n_right - half_w)
        n_hi = self.mesh.n_left - half_w
        if (n_hi <= n_lo).any():
            raise ParameterError("track corridor narrower than the car")

        lo = np.empty(self.n)
        hi = np.empty(self.n)
        x_lo_base = np.array([vp.v_min, -opt.beta_max, -opt.psidot_max,
                              0.0, -opt.xi_max, *t_lo])
        x_hi_base = np.array([vp.v_max, opt.beta_max, opt.psidot_max,
                              0.0, opt.xi_max, *t_hi])
        u_lo = np.array([0.0, vp.f_b_max, -vp.delta_max, -vp.gamma_max])
        u_hi = np.array([vp.f_d_max, 0.0, vp.delta_max, vp.gamma_max])
        for k in range(self.n_nodes):
            x_lo = x_lo_base.copy()
            x_hi = x_hi_base.copy()
            x_lo[3] = n_lo[k]
            x_hi[3] = n_hi[k]
            o = self.state_offset(k) if k < self.n_int else self.n - N_STATES
            lo[o:o + N_STATES] = x_lo / self.scaling.x
            hi[o:o + N_STATES] = x_hi / self.scaling.x
        for k in range(self.n_int):
            o = self.control_offset(k)
            lo[o:o + N_CONTROLS] = u_lo / self.scaling.u
            hi[o:o + N_CONTROLS] = u_hi / self.scaling.u
        self.lo = lo
        self.hi = hi

    def _validate_boundary(self):
        """Initial temperatures must sit strictly inside their boxes."""
        t0 = np.asarray(self.boundary.t0, dtype=float)
        o = 0  # thermal pins act on node 0
        lo = self.lo[o + 5:o + 10] * self.scaling.x[5:]
        hi = self.hi[o + 5:o + 10] * self.scaling.x[5:]
        m = self.options.boundary_margin
        bad = (t0 < lo + m) | (t0 > hi - m)
        if bad.any():
            names = [STATE_NAMES[5 + i] for i in np.where(bad)[0]]
            raise ParameterError(
                "initial temperatures must lie strictly inside their "
                f"operating boxes; violated for {', '.join(names)}")

    def _next_interval(self, k):
        """Interval whose control acts at interval k's right node."""
        if k + 1 < self.n_int:
            return k + 1
        return 0 if self.boundary.cyclic else self.n_int - 1

    def _build_indices(self):
        """Fixed index arrays for Jacobian and Hessian assembly."""
        n_int = self.n_int
        # variable indices touched by the left and right evaluation of each
        # interval: left sees (x_k, u_k) contiguously, right sees
        # (x_{k+1}, u_{k+1}) with the control wrap/clamp at the horizon end
        left = np.empty((n_int, NV), dtype=np.int64)
        right = np.empty((n_int, NV), dtype=np.int64)
        for k in range(n_int):
            xo = self.state_offset(k)
            xn = self.state_offset(k + 1) if k + 1 < self.n_int else self.n - N_STATES
            un = self.control_offset(self._next_interval(k))
            left[k] = np.arange(xo, xo + NV)
            right[k, :N_STATES] = np.arange(xn, xn + N_STATES)
            right[k, N_STATES:] = np.arange(un, un + N_CONTROLS)
        self._left_idx = left
        self._right_idx = right
        self._eval_idx = np.vstack([left, right])  # (2*n_int, 14)

        # --- equality rows -------------------------------------------------
        nd = N_STATES * n_int
        self.eq_slices = {
            "defects": slice(0, nd),
            "load_transfer": slice(nd, nd + n_int),
            "thermal_pins": slice(nd + n_int, nd + n_int + 5),
            "closure": slice(nd + n_int + 5, nd + n_int + 10),
        }
        # defect rows: 28 columns each (x_k, u_k, x_{k+1}, u_{k+1}); the
        # clamped final interval repeats u_{N-1}, whose entries merge by
        # summation when the COO matrix is compressed
        rows = np.repeat(np.arange(nd).reshape(n_int, N_STATES), 2 * NV, axis=1)
        cols = np.empty((n_int, N_STATES, 2 * NV), dtype=np.int64)
        for k in range(n_int):
            cols[k, :, :] = np.concatenate([left[k], right[k]])
        jr = [rows.ravel()]
        jc = [cols.ravel()]
        # load transfer rows: gamma, f_d, f_b of the interval
        lt_rows = nd + np.arange(n_int)
        uo = np.array([self.control_offset(k) for k in range(n_int)])
        jr.append(np.repeat(lt_rows, 3))
        jc.append(np.column_stack([uo + 3, uo + 0, uo + 1]).ravel())
        # thermal pins on node 0
        pin_rows = nd + n_int + np.arange(5)
        jr.append(pin_rows)
        jc.append(np.arange(5, 10, dtype=np.int64))
        # driving closure rows: cyclic couples last to first node, pinned
        # fixes the first node
        cl_rows = nd + n_int + 5 + np.arange(5)
        first = np.arange(0, 5, dtype=np.int64)
        if self.boundary.cyclic:
            last = self.n - N_STATES + np.arange(5, dtype=np.int64)
            jr.append(np.repeat(cl_rows, 2))
            jc.append(np.column_stack([last, first]).ravel())
        else:
            jr.append(cl_rows)
            jc.append(first)
        self._jeq_rows = np.concatenate(jr)
        self._jeq_cols = np.concatenate(jc)

        # --- inequality rows -----------------------------------------------
        # per interval: 4 path rows at the left point, 4 at the right point,
        # then the exclusivity products. With node-attributed controls the
        # right-point rows coincide with the next interval's left-point rows;
        # the redundancy is benign for the interior-point solver and keeps
        # every node covered on pinned horizons too.
        self.ineq_slices = {
            "path_left": slice(0, 4 * n_int),
            "path_right": slice(4 * n_int, 8 * n_int),
            "exclusivity": slice(8 * n_int, 9 * n_int),
        }
        path_rows_l = np.arange(4 * n_int).reshape(n_int, 4)
        path_rows_r = 4 * n_int + np.arange(4 * n_int).reshape(n_int, 4)
        ir = [np.repeat(path_rows_l, NV, axis=1).ravel(),
              np.repeat(path_rows_r, NV, axis=1).ravel()]
        ic = [np.tile(left, (1, 4)).ravel(), np.tile(right, (1, 4)).ravel()]
        ex_rows = 8 * n_int + np.arange(n_int)
        ir.append(np.repeat(ex_rows, 2))
        ic.append(np.column_stack([uo + 0, uo + 1]).ravel())
        self._jineq_rows = np.concatenate(ir)
        self._jineq_cols = np.concatenate(ic)

        # --- Hessian pattern -----------------------------------------------
        # dense 14x14 blocks at every evaluation point plus the exclusivity
        # cross terms; duplicate entries merge on conversion
        eidx = self._eval_idx
        hr = [np.repeat(eidx, NV, axis=1).ravel()]
        hc = [np.tile(eidx, (1, NV)).ravel()]
        hr.append(np.concatenate([uo + 0, uo + 1]))
        hc.append(np.concatenate([uo + 1, uo + 0]))
        self._h_rows = np.concatenate(hr)
        self._h_cols = np.concatenate(hc)

        self._uo = uo
        h = self.mesh.h
        self._w_half = 0.5 * h  # trapezoid half-weights per interval

    def _build_regularizer(self):
        """Constant Hessian of the steering rate penalty (scaled basis).

        The penalty is reg_steer_rate times the sum of squared steering
        increments between consecutive intervals, wrapping across the start
        line on cyclic horizons. Stored as 2*w*D'D so the penalty value is
        0.5*z'Rz and its gradient Rz.
        """
        w = self.options.reg_steer_rate
        if w <= 0.0 or self.n_int < 2:
            self._reg_h = None
            return
        idx = np.array([self.control_offset(k) + 2 for k in range(self.n_int)])
        n_pairs = self.n_int if self.boundary.cyclic else self.n_int - 1
        rows = np.arange(n_pairs)
        d = sp.coo_matrix(
            (np.concatenate([np.ones(n_pairs), -np.ones(n_pairs)]),
             (np.concatenate([rows, rows]),
              np.concatenate([idx[(rows + 1) % self.n_int], idx[rows]]))),
            shape=(n_pairs, self.n)).tocsr()
        scale = 2.0 * w * self.scaling.u[2] ** 2
        self._reg_h = (scale * (d.T @ d)).tocsc()

    def _reg_value(self, z):
        return 0.5 * float(z @ (self._reg_h @ z)) if self._reg_h is not None else 0.0

    def race_time(self, z):
        """Lap time integral alone [s], without the regularization term."""
        batch = self._dyn_batch(z, order=0)
        ell = ad.value(batch["ell"])
        n_int = self.n_int
        return float(np.sum(self._w_half * (ell[:n_int] + ell[n_int:])))

    # ------------------------------------------------------------------
    # model evaluation

    def _dyn_batch(self, z, order):
        """Evaluate dynamics, path quantities and lethargy on all points.

        Points 0..n_int-1 are the interval left ends (x_k, u_k), points
        n_int..2*n_int-1 the right ends (x_{k+1}, u_{k+1}), the final right
        control wrapping to u_0 on cyclic horizons and clamping otherwise.
        Curvature comes from the mesh's interval-interior samples so a
        curvature step sitting on a shared node never leaks into the
        neighbouring interval.
        """
        x, u = self.split(z)
        xb = np.vstack([x[:-1], x[1:]])
        u_tail = u[:1] if self.boundary.cyclic else u[-1:]
        ub = np.vstack([u, u[1:], u_tail])
        kb = np.concatenate([self.mesh.kappa_left, self.mesh.kappa_right])
        cols = [xb[:, i] for i in range(N_STATES)] + [ub[:, j] for j in range(N_CONTROLS)]
        if order > 0:
            scales = np.concatenate([self.scaling.x, self.scaling.u])
            b = xb.shape[0]
            lifted = []
            for i, c in enumerate(cols):
                jac = np.zeros((b, NV))
                jac[:, i] = scales[i]
                hess = np.zeros((b, NV, NV)) if order > 1 else None
                lifted.append(ad.Dual(c.copy(), jac, hess))
            cols = lifted
        rates, extras = dynamics.spatial_derivatives(
            cols[:N_STATES], cols[N_STATES:], kb, self.vp, self.tp, self.pp)
        forces, chain = extras["forces"], extras["chain"]
        eta = self.options.grip_usage_max
        fric_f = vehicle.friction_circle_usage(
            forces["f_xf"], forces["f_yf"], forces["f_zf"], self.vp.mu) - eta
        fric_r = vehicle.friction_circle_usage(
            forces["f_xr"], forces["f_yr"], forces["f_zr"], self.vp.mu) - eta
        # the cap limits the total requested power P_sigma = (F_d + F_b) v
        p_cap = chain.p_sigma / self.vp.p_max - 1.0
        p_lim = powerloss.battery_power_limit(self.pp.battery)
        batt = (chain.p_out_b - self.pp.battery.feas_margin * p_lim) / p_lim
        return {
            "rates": rates,
            "path": [fric_f, fric_r, p_cap, batt],
            "ell": extras["dt_ds"],
            "chain": chain,
        }

    def _values_from_batch(self, z, batch):
        """Objective and constraint values from a batch evaluation."""
        n_int = self.n_int
        rate_vals = np.column_stack([ad.value(r) for r in batch["rates"]])
        ell = ad.value(batch["ell"])
        w = self._w_half
        f = float(np.sum(w * (ell[:n_int] + ell[n_int:]))) + self._reg_value(z)

        x, u = self.split(z)
        xs = x / self.scaling.x
        rate_scaled = rate_vals / self.scaling.x
        defects = (xs[1:] - xs[:-1]
                   - w[:, None] * (rate_scaled[:n_int] + rate_scaled[n_int:]))
        lt = vehicle.load_transfer(u[:, 0], u[:, 1], self.vp) / self.scaling.u[3]
        gamma_rows = u[:, 3] / self.scaling.u[3] - lt
        pins = xs[0, 5:] - np.asarray(self.boundary.t0) / self.scaling.x[5:]
        if self.boundary.cyclic:
            closure = xs[-1, :5] - xs[0, :5]
        else:
            closure = xs[0, :5] - np.asarray(self.boundary.driving0) / self.scaling.x[:5]
        c_eq = np.concatenate([defects.ravel(), gamma_rows, pins, closure])

        path = np.column_stack([ad.value(g) for g in batch["path"]])
        zfd = u[:, 0] / self.scaling.u[0]
        zfb = u[:, 1] / self.scaling.u[1]
        excl = -zfd * zfb - self.options.eps_excl
        c_ineq = np.concatenate([path[:n_int].ravel(), path[n_int:].ravel(), excl])
        return f, c_eq, c_ineq

    def evaluate(self, z, order=1):
        """EvalBundle at z; order 0 skips the derivative payloads."""
        batch = self._dyn_batch(z, order)
        f, c_eq, c_ineq = self._values_from_batch(z, batch)
        if order == 0:
            return EvalBundle(f=f, grad=None, c_eq=c_eq, c_ineq=c_ineq,
                              j_eq=None, j_ineq=None)

        n_int = self.n_int
        w = self._w_half
        ell = batch["ell"]
        grad = np.zeros(self.n)
        np.add.at(grad, self._left_idx.ravel(),
                  (w[:, None] * ell.jac[:n_int]).ravel())
        np.add.at(grad, self._right_idx.ravel(),
                  (w[:, None] * ell.jac[n_int:]).ravel())
        if self._reg_h is not None:
            grad += self._reg_h @ z

        # defect Jacobian values, laid out (n_int, 10, 28): the left-point
        # block (x_k, u_k) then the right-point block (x_{k+1}, u_{k+1})
        jf = np.stack([r.jac for r in batch["rates"]], axis=1)  # (2N, 10, 14)
        jf_l = jf[:n_int] / self.scaling.x[None, :, None]
        jf_r = jf[n_int:] / self.scaling.x[None, :, None]
        vals = np.empty((n_int, N_STATES, 2 * NV))
        eye = np.eye(N_STATES)
        wcol = w[:, None, None]
        vals[:, :, :NV] = -wcol * jf_l
        vals[:, :, :N_STATES] -= eye
        vals[:, :, NV:] = -wcol * jf_r
        vals[:, :, NV:NV + N_STATES] += eye
        jeq_vals = [vals.ravel()]
        # load transfer rows: d/dgamma = 1, d/dz_fd, d/dz_fb constants
        vp = self.vp
        c_lt = vp.h_cog / (vp.wheelbase * vp.mass * vehicle.G * self.scaling.u[3])
        lt_block = np.tile(np.array([1.0,
                                     -c_lt * self.scaling.u[0],
                                     -c_lt * self.scaling.u[1]]), n_int)
        jeq_vals.append(lt_block)
        jeq_vals.append(np.ones(5))  # thermal pins
        if self.boundary.cyclic:
            jeq_vals.append(np.tile(np.array([1.0, -1.0]), 5))
        else:
            jeq_vals.append(np.ones(5))
        j_eq = sp.coo_matrix((np.concatenate(jeq_vals),
                              (self._jeq_rows, self._jeq_cols)),
                             shape=(self.m_eq, self.n)).tocsr()

        jg = np.stack([g.jac for g in batch["path"]], axis=1)  # (2N, 4, 14)
        _, u = self.split(z)
        zfd = u[:, 0] / self.scaling.u[0]
        zfb = u[:, 1] / self.scaling.u[1]
        excl_block = np.column_stack([-zfb, -zfd]).ravel()
        j_ineq = sp.coo_matrix((np.concatenate([jg[:n_int].ravel(),
                                                jg[n_int:].ravel(),
                                                excl_block]),
                                (self._jineq_rows, self._jineq_cols)),
                               shape=(self.m_ineq, self.n)).tocsr()
        return EvalBundle(f=f, grad=grad, c_eq=c_eq, c_ineq=c_ineq,
                          j_eq=j_eq, j_ineq=j_ineq)

    # ------------------------------------------------------------------
    # public single-quantity entry points

    def objective(self, z):
        return self.evaluate(z, order=0).f

    def gradient(self, z):
        return self.evaluate(z, order=1).grad

    def constraints(self, z):
        b = self.evaluate(z, order=0)
        return b.c_eq, b.c_ineq

    def jacobian(self, z):
        """Stacked constraint Jacobian (equalities above inequalities)."""
        b = self.evaluate(z, order=1)
        return sp.vstack([b.j_eq, b.j_ineq]).tocsr()

    def hess_lagrangian(self, z, sigma, y_eq, y_ineq):
        """Exact Hessian of sigma*f + y_eq.c_eq + y_ineq.c_ineq at z (CSC).

        Contracts the second-order batch evaluation with the multipliers;
        the result is symmetric with the fixed pattern built at init.
        """
        batch = self._dyn_batch(z, order=2)
        n_int = self.n_int
        w = self._w_half
        lam_d = np.asarray(y_eq[self.eq_slices["defects"]]).reshape(n_int, N_STATES)
        path_rows = np.asarray(y_ineq)
        nu_l = path_rows[self.ineq_slices["path_left"]].reshape(n_int, 4)
        nu_r = path_rows[self.ineq_slices["path_right"]].reshape(n_int, 4)
        nu_x = path_rows[self.ineq_slices["exclusivity"]]

        # weights of each dual output per evaluation point
        w_def = -(w[:, None] * lam_d) / self.scaling.x[None, :]  # (N,10)
        blocks = np.zeros((2 * n_int, NV, NV))
        for i, r in enumerate(batch["rates"]):
            blocks[:n_int] += w_def[:, i, None, None] * r.hess[:n_int]
            blocks[n_int:] += w_def[:, i, None, None] * r.hess[n_int:]
        for j, g in enumerate(batch["path"]):
            blocks[:n_int] += nu_l[:, j, None, None] * g.hess[:n_int]
            blocks[n_int:] += nu_r[:, j, None, None] * g.hess[n_int:]
        ell = batch["ell"]
        blocks[:n_int] += (sigma * w)[:, None, None] * ell.hess[:n_int]
        blocks[n_int:] += (sigma * w)[:, None, None] * ell.hess[n_int:]

        excl_vals = np.tile(-nu_x, 2)
        h_vals = np.concatenate([blocks.ravel(), excl_vals])
        h = sp.coo_matrix((h_vals, (self._h_rows, self._h_cols)),
                          shape=(self.n, self.n)).tocsc()
        if self._reg_h is not None:
            h = (h + sigma * self._reg_h).tocsc()
        return h

    # ------------------------------------------------------------------

    def jacobian_pattern(self):
        """Canonical (rows, cols) sparsity of the stacked Jacobian."""
        rows = np.concatenate([self._jeq_rows, self.m_eq + self._jineq_rows])
        cols = np.concatenate([self._jeq_cols, self._jineq_cols])
        order = np.lexsort((cols, rows))
        pat = np.unique(np.column_stack([rows[order], cols[order]]), axis=0)
        return pat[:, 0], pat[:, 1]

    def describe(self):
        """Human-readable variable and constraint census."""
        n_int = self.n_int
        lines = [
            f"nodes                 {self.n_nodes}",
            f"intervals             {n_int}",
            f"variables             {self.n}",
            f"  states              {N_STATES * self.n_nodes}",
            f"  controls            {N_CONTROLS * n_int}",
            f"equalities            {self.m_eq}",
            f"  defects             {N_STATES * n_int}",
            f"  load transfer       {n_int}",
            f"  thermal pins        5",
            f"  driving closure     5 ({'cyclic' if self.boundary.cyclic else 'pinned'})",
            f"inequalities          {self.m_ineq}",
            f"  path (both ends)    {8 * n_int}",
            f"  drive/brake excl    {n_int}",
        ]
        return "\n".join(lines)


def build_nlp(mesh, vp, tp, pp, limits, boundary, scaling=None, options=None):
    """Assemble the collocation NLP over a mesh. See NlpProblem."""
    return NlpProblem(mesh, vp, tp, pp, limits, boundary,
                      scaling=scaling, options=options)


def _speed_profile(mesh, vp, usage=1.0):
    """Quasi-steady speed guess: curvature-limited with cyclic sweeps.

    Starts from the lateral grip limit per node, then runs forward
    (acceleration-limited) and backward (braking-limited) passes twice
    around the closed horizon so the profile is consistent across the
    start line.
    """
    kappa = np.abs(mesh.kappa)
    mu_g = 0.92 * usage * vp.mu * vehicle.G
    with np.errstate(divide="ignore"):
        v_lat = np.sqrt(mu_g / np.maximum(kappa, 1e-9))
    v = np.minimum(v_lat, 0.97 * vp.v_max)
    h = mesh.h
    n = mesh.n_intervals
    m = vp.mass
    for _ in range(2):
        for k in range(n):  # forward, acceleration limited
            vk = v[k]
            drag = 0.5 * vp.rho_air * vp.c_d_a * vk * vk
            f_drive = min(vp.f_d_max, 0.98 * vp.p_max / max(vk, 1.0))
            a_eng = max(0.2, (f_drive - drag - vp.c_roll * m * vehicle.G) / m)
            a_grip = np.sqrt(max(0.04, mu_g ** 2 - (vk * vk * kappa[k]) ** 2))
            a = min(a_eng, a_grip)
            v[k + 1] = min(v[k + 1], np.sqrt(vk * vk + 2.0 * a * h[k]))
        v[0] = min(v[0], v[-1])
        for k in range(n - 1, -1, -1):  # backward, braking limited
            vk = v[k + 1]
            a_grip = np.sqrt(max(0.04, mu_g ** 2 - (vk * vk * kappa[k + 1]) ** 2))
            a_brk = min(-vp.f_b_max / m, a_grip)
            v[k] = min(v[k], np.sqrt(vk * vk + 2.0 * a_brk * h[k]))
        v[-1] = min(v[-1], v[0])
    return np.maximum(v, vp.v_min + 0.5)


def initial_guess(mesh, vp, tp, pp, limits, boundary, scaling=None,
                  options=None):
    """Feasible-leaning starting point for the collocation NLP.

    The speed profile comes from a quasi-steady sweep, path states follow
    the centerline, controls re-enact the speed profile's longitudinal
    force demand, and the thermal states are forward-integrated along the
    mesh so the defect equations start out nearly satisfied.
    """
    scaling = scaling or Scaling.default(vp)
    opts = options or OcpOptions()
    n_int = mesh.n_intervals
    v = _speed_profile(mesh, vp, usage=opts.grip_usage_max)
    kappa = mesh.kappa

    x = np.zeros((mesh.n_nodes, N_STATES))
    x[:, 0] = v
    x[:, 1] = 0.3 * vp.l_r * kappa          # mild sideslip into the turns
    x[:, 2] = v * kappa                     # path-following yaw rate
    # columns 3 (offset) and 4 (heading error) stay on the centerline

    # controls live at the interval's left node under the transcription's
    # piecewise linear control model, so sample the demand there
    u = np.zeros((n_int, N_CONTROLS))
    h = mesh.h
    a_req = (v[1:] ** 2 - v[:-1] ** 2) / (2.0 * h)
    f_net = (vp.mass * a_req
             + 0.5 * vp.rho_air * vp.c_d_a * v[:-1] ** 2
             + vp.c_roll * vp.mass * vehicle.G)
    u[:, 0] = np.clip(np.where(f_net > 0.0, f_net, 0.0), 0.0, 0.95 * vp.f_d_max)
    u[:, 1] = np.clip(np.where(f_net < 0.0, f_net, 0.0), 0.95 * vp.f_b_max, 0.0)
    u[:, 2] = np.clip(np.arctan(vp.wheelbase * kappa[:-1]),
                      -0.9 * vp.delta_max, 0.9 * vp.delta_max)
    u[:, 3] = np.clip(vehicle.load_transfer(u[:, 0], u[:, 1], vp),
                      -0.9 * vp.gamma_max, 0.9 * vp.gamma_max)

    # forward-integrate the thermal states so defects start small
    x[0, 5:] = np.asarray(boundary.t0, dtype=float)
    for k in range(n_int):
        rates, extras = dynamics.time_derivatives(
            list(x[k]), list(u[k]), kappa[k], vp, tp, pp)
        dt = h[k] * float(extras["dt_ds"])
        x[k + 1, 5:] = x[k, 5:] + dt * np.asarray(rates[5:], dtype=float)

    xs = (x / scaling.x).astype(float)
    us = (u / scaling.u).astype(float)
    z = np.empty(NV * n_int + N_STATES)
    body = z[:NV * n_int].reshape(n_int, NV)
    body[:, :N_STATES] = xs[:-1]
    body[:, N_STATES:] = us
    z[-N_STATES:] = xs[-1]
    return z
