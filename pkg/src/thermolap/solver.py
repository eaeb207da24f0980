"""Primal-dual interior-point solver for the collocation NLP.

Solves   min f(z)  s.t.  c_eq(z) = 0,  c_ineq(z) <= 0,  lo <= z <= hi

by a monotone barrier method: inequality constraints get slacks
(c_ineq + s = 0, s > 0), bounds and slacks enter a log barrier with
parameter mu, and each barrier subproblem is approximately solved by
Newton steps on the primal-dual optimality system. The reduced symmetric
KKT matrix is factorized by sparse LU in symmetric mode without diagonal
pivoting, which exposes the matrix inertia on the U diagonal; a diagonal
regularization is raised until the inertia certifies a descent-generating
step. Step sizes come from the fraction-to-boundary rule followed by a
filter line search on the pair (constraint violation, barrier objective),
with a second-order correction step against the Maratos effect.

A scipy-based fallback (solve_with_scipy) wraps the same problem objects
for cross-checks on small instances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SolverError

__all__ = ["SolverOptions", "SolveResult", "solve", "solve_with_scipy"]


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and algorithm constants of the interior-point method."""

    tol_feas: float = 1e-6      # primal infeasibility target (scaled constraints)
    tol_opt: float = 1e-6       # dual infeasibility and complementarity target
    max_iter: int = 300
    mu_init: float = 0.3        # initial barrier parameter
    kappa_mu: float = 0.2       # linear barrier reduction factor
    theta_mu: float = 1.5       # superlinear barrier reduction exponent
    kappa_eps: float = 10.0     # subproblem is done when error <= kappa_eps*mu
    tau_min: float = 0.99       # fraction-to-boundary floor
    bound_push: float = 0.01    # initial interior push, fraction of bound range
    slack_floor: float = 1e-4   # minimum initial slack
    ls_max_backtracks: int = 25
    eta_phi: float = 1e-8       # Armijo constant of the filter search
    gamma_theta: float = 1e-5   # filter margin on constraint violation
    gamma_phi: float = 1e-5     # filter margin on barrier objective
    delta_switch: float = 1.0   # switching condition scale
    s_theta: float = 1.1        # switching condition exponents
    s_phi: float = 2.3
    gamma_alpha: float = 0.05   # fraction of the smallest productive step
    kappa_soc: float = 0.99     # required violation decay between corrections
    max_soc: int = 4            # second-order correction attempts per step
    delta_w0: float = 1e-4      # first Hessian regularization to try
    delta_w_min: float = 1e-20
    delta_w_max: float = 1e10
    k_w_plus: float = 8.0       # escalation within an iteration
    k_w_plus_first: float = 100.0
    k_w_minus: float = 1.0 / 3.0  # relaxation between iterations
    delta_c: float = 1e-8       # constraint block regularization
    kappa_sigma: float = 1e10   # dual safeguard corridor width
    y_init_max: float = 1e3     # cap on least-squares multiplier initialization
    verbose: bool = False


@dataclass
class SolveResult:
    """Outcome of one optimization run."""

    status: str                # optimal | max_iter | infeasible | numerical
    iterations: int
    objective: float
    primal_inf: float
    dual_inf: float
    complementarity: float
    solve_time: float
    message: str
    z: np.ndarray
    y_eq: np.ndarray
    y_ineq: np.ndarray
    slacks: np.ndarray | None = None
    mu_final: float = 0.0
    iteration_log: list = field(default_factory=list)

    @property
    def success(self):
        return self.status == "optimal"


def _inertia(lu, size, tiny=1e-12):
    """(positive, negative, zero) eigenvalue counts from an LDU diagonal.

    The zero test is an absolute floor: KKT pivots legitimately span from
    the delta_c regularization (1e-8) up to the barrier terms (1e10+), so
    a threshold relative to the largest pivot would misread small but
    healthy pivots as rank deficiency.
    """
    d = lu.U.diagonal()
    n_zero = int((np.abs(d) < tiny).sum())
    n_pos = int((d > tiny).sum())
    return n_pos, size - n_pos - n_zero, n_zero


class _Barrier(object):
    """Bookkeeping for bounds, slacks and barrier terms."""

    def __init__(self, lo, hi):
        self.lo = lo
        self.hi = hi
        self.fin_lo = np.isfinite(lo)
        self.fin_hi = np.isfinite(hi)

    def push_inside(self, z, frac):
        """Move a start point strictly inside its bounds."""
        rng = np.where(self.fin_lo & self.fin_hi, self.hi - self.lo, 1.0)
        pad = np.minimum(frac * rng, 0.05)
        z = np.where(self.fin_lo, np.maximum(z, self.lo + pad), z)
        z = np.where(self.fin_hi, np.minimum(z, self.hi - pad), z)
        return z

    def gaps(self, z):
        """Distances to the bounds, 1.0 placeholder where infinite."""
        d_lo = np.where(self.fin_lo, z - self.lo, 1.0)
        d_hi = np.where(self.fin_hi, self.hi - z, 1.0)
        return d_lo, d_hi

    def barrier_value(self, mu, z, s):
        d_lo, d_hi = self.gaps(z)
        if (d_lo <= 0.0).any() or (d_hi <= 0.0).any() or (s <= 0.0).any():
            return np.inf
        val = -mu * (np.log(d_lo[self.fin_lo]).sum()
                     + np.log(d_hi[self.fin_hi]).sum()
                     + np.log(s).sum())
        return val


def _fraction_to_boundary(val, step, tau, mask=None):
    """Largest alpha in (0, 1] with val + alpha*step >= (1 - tau)*val."""
    neg = step < 0.0
    if mask is not None:
        neg = neg & mask
    if not neg.any():
        return 1.0
    return float(min(1.0, np.min(-tau * val[neg] / step[neg])))


def _init_eq_multipliers(bundle, r_bound, m_eq, cap):
    """Least-squares start for the equality multipliers.

    Minimizes ||grad - z_l + z_u + J_in^T y_in + J_eq^T y|| over y by the
    normal equations; falls back to zero when the result is outsized.
    """
    if m_eq == 0:
        return np.zeros(0)
    j_eq = bundle.j_eq.tocsr()
    gram = (j_eq @ j_eq.T + 1e-8 * sp.eye(m_eq)).tocsc()
    try:
        y = splu(gram).solve(-(j_eq @ r_bound))
    except RuntimeError:
        return np.zeros(m_eq)
    if not np.isfinite(y).all() or np.abs(y).max() > cap:
        return np.zeros(m_eq)
    return y


def solve(problem, options=None):
    """Run the interior-point method on an NlpProblem-like object."""
    opt = options or SolverOptions()
    t0 = time.perf_counter()
    n, m_eq, m_in = problem.n, problem.m_eq, problem.m_ineq
    bar = _Barrier(np.asarray(problem.lo, dtype=float),
                   np.asarray(problem.hi, dtype=float))

    z = np.asarray(problem.z0 if hasattr(problem, "z0") else
                   0.5 * (problem.lo + problem.hi), dtype=float).copy()
    if not np.isfinite(z).all():
        raise SolverError("initial point contains non-finite entries")
    z = bar.push_inside(z, opt.bound_push)
    bundle = problem.evaluate(z, order=1)

    mu = opt.mu_init
    s = np.maximum(-bundle.c_ineq, opt.slack_floor)
    y_in = np.minimum(mu / s, 1e4)
    d_lo, d_hi = bar.gaps(z)
    z_l = np.where(bar.fin_lo, mu / d_lo, 0.0)
    z_u = np.where(bar.fin_hi, mu / d_hi, 0.0)
    y_eq = _init_eq_multipliers(
        bundle, bundle.grad + bundle.j_ineq.T @ y_in - z_l + z_u,
        m_eq, opt.y_init_max)

    def theta_of(c_eq, c_ineq, s_cur):
        tot = float(np.abs(c_eq).sum()) if m_eq else 0.0
        if m_in:
            tot += float(np.abs(c_ineq + s_cur).sum())
        return tot

    theta_0 = theta_of(bundle.c_eq, bundle.c_ineq, s)
    theta_max_f = 1e4 * max(1.0, theta_0)
    theta_min_f = 1e-4 * max(1.0, theta_0)
    filt = [(theta_max_f, -np.inf)]

    def forbidden(th, ph):
        return any(th >= th_j and ph >= ph_j for th_j, ph_j in filt)

    delta_w_last = 0.0
    log = []
    status, message = "max_iter", "iteration limit reached"
    mu_floor = opt.tol_opt / (2.0 * opt.kappa_eps)
    just_reset = False

    def kkt_errors(bnd, mu_val):
        r_d = (bnd.grad + bnd.j_eq.T @ y_eq + bnd.j_ineq.T @ y_in
               - z_l + z_u)
        primal = max(
            float(np.abs(bnd.c_eq).max()) if m_eq else 0.0,
            float(np.abs(bnd.c_ineq + s).max()) if m_in else 0.0)
        d_lo_, d_hi_ = bar.gaps(z)
        comp_terms = []
        if bar.fin_lo.any():
            comp_terms.append(np.abs(d_lo_[bar.fin_lo] * z_l[bar.fin_lo] - mu_val))
        if bar.fin_hi.any():
            comp_terms.append(np.abs(d_hi_[bar.fin_hi] * z_u[bar.fin_hi] - mu_val))
        if m_in:
            comp_terms.append(np.abs(s * y_in - mu_val))
        comp = max(float(t.max()) for t in comp_terms) if comp_terms else 0.0
        s_max = 100.0
        dual_count = n + m_eq + m_in
        dual_sum = (np.abs(y_eq).sum() + np.abs(y_in).sum()
                    + np.abs(z_l).sum() + np.abs(z_u).sum())
        s_d = max(s_max, dual_sum / max(1, dual_count)) / s_max
        dual = float(np.abs(r_d).max()) / s_d if n else 0.0
        return primal, dual, comp

    it = 0
    while it < opt.max_iter:
        primal0, dual0, comp0 = kkt_errors(bundle, 0.0)
        if primal0 <= opt.tol_feas and dual0 <= opt.tol_opt and comp0 <= opt.tol_opt:
            status, message = "optimal", "converged to tolerance"
            break
        primal_mu, dual_mu, comp_mu = kkt_errors(bundle, mu)
        if max(primal_mu, dual_mu, comp_mu) <= opt.kappa_eps * mu and mu > mu_floor:
            mu = max(mu_floor, min(opt.kappa_mu * mu, mu ** opt.theta_mu))
            filt = [(theta_max_f, -np.inf)]
            continue
        tau = max(opt.tau_min, 1.0 - mu)

        # Newton step on the barrier KKT system
        hess = problem.hess_lagrangian(z, 1.0, y_eq, y_in)
        d_lo, d_hi = bar.gaps(z)
        sigma_z = np.where(bar.fin_lo, z_l / d_lo, 0.0) \
            + np.where(bar.fin_hi, z_u / d_hi, 0.0)
        grad_phi = (bundle.grad
                    - np.where(bar.fin_lo, mu / d_lo, 0.0)
                    + np.where(bar.fin_hi, mu / d_hi, 0.0))
        rhs = np.concatenate([
            -(grad_phi + bundle.j_eq.T @ y_eq + bundle.j_ineq.T @ y_in),
            -bundle.c_eq,
            -bundle.c_ineq - mu / y_in,
        ])

        delta_w = 0.0
        step = None
        for attempt in range(40):
            k_mat = sp.bmat([
                [hess + sp.diags(sigma_z + delta_w), bundle.j_eq.T, bundle.j_ineq.T],
                [bundle.j_eq, -opt.delta_c * sp.eye(m_eq), None],
                [bundle.j_ineq, None, -sp.diags(s / y_in) - opt.delta_c * sp.eye(m_in)],
            ], format="csc")
            try:
                lu = splu(k_mat, permc_spec="MMD_AT_PLUS_A",
                          diag_pivot_thresh=0.0,
                          options=dict(SymmetricMode=True))
                n_pos, n_neg, n_zero = _inertia(lu, k_mat.shape[0])
                ok = (n_pos == n and n_zero == 0)
            except RuntimeError:
                ok = False
            if ok:
                step = lu.solve(rhs)
                if not np.isfinite(step).all():
                    step, ok = None, False
            if step is not None:
                break
            if delta_w == 0.0:
                delta_w = (opt.delta_w0 if delta_w_last == 0.0
                           else max(opt.delta_w_min, opt.k_w_minus * delta_w_last))
            else:
                delta_w *= (opt.k_w_plus_first if delta_w_last == 0.0
                            else opt.k_w_plus)
            if delta_w > opt.delta_w_max:
                break
        if step is None:
            status, message = "numerical", "KKT regularization exhausted"
            break
        if delta_w > 0.0:
            delta_w_last = delta_w

        dz = step[:n]
        dy_eq = step[n:n + m_eq]
        dy_in = step[n + m_eq:]
        ds = -(bundle.c_ineq + s) - bundle.j_ineq @ dz
        dz_l = np.where(bar.fin_lo, mu / d_lo - z_l - (z_l / d_lo) * dz, 0.0)
        dz_u = np.where(bar.fin_hi, mu / d_hi - z_u + (z_u / d_hi) * dz, 0.0)

        # fraction-to-boundary: bound gaps move by +dz (lower) and -dz (upper)
        a_max = 1.0
        a_max = min(a_max, _fraction_to_boundary(d_lo, dz, tau, bar.fin_lo))
        a_max = min(a_max, _fraction_to_boundary(d_hi, -dz, tau, bar.fin_hi))
        a_max = min(a_max, _fraction_to_boundary(s, ds, tau))
        a_dual = min(
            _fraction_to_boundary(z_l, dz_l, tau, bar.fin_lo),
            _fraction_to_boundary(z_u, dz_u, tau, bar.fin_hi),
            _fraction_to_boundary(y_in, dy_in, tau))

        # filter line search on (constraint violation, barrier objective)
        th_k = theta_of(bundle.c_eq, bundle.c_ineq, s)
        phi_k = bundle.f + bar.barrier_value(mu, z, s)
        gd = float(grad_phi @ dz - ((mu / s) @ ds if m_in else 0.0))
        if gd < 0.0 and th_k > 0.0:
            cand = [opt.gamma_theta, opt.gamma_phi * th_k / (-gd)]
            if th_k <= theta_min_f:
                cand.append(opt.delta_switch * th_k ** opt.s_theta
                            / (-gd) ** opt.s_phi)
            alpha_min = opt.gamma_alpha * min(cand)
        else:
            alpha_min = 0.0

        alpha = a_max
        accepted = False
        f_type = False
        z_new = s_new = None
        soc_done = False

        def try_point(z_t, s_t, alpha_sw):
            """Filter and Armijo tests; returns (accepted, f_type, theta_t)."""
            trial = problem.evaluate(z_t, order=0)
            th_t = theta_of(trial.c_eq, trial.c_ineq, s_t)
            phi_t = trial.f + bar.barrier_value(mu, z_t, s_t)
            if not np.isfinite(phi_t) or forbidden(th_t, phi_t):
                return False, False, th_t
            switching = (gd < 0.0 and
                         alpha_sw * (-gd) ** opt.s_phi
                         > opt.delta_switch * th_k ** opt.s_theta)
            armijo = phi_t <= phi_k + opt.eta_phi * alpha_sw * gd
            if th_k <= theta_min_f and switching:
                return (armijo, True, th_t)
            progress = (th_t <= (1.0 - opt.gamma_theta) * th_k
                        or phi_t <= phi_k - opt.gamma_phi * th_k)
            return (progress, switching and armijo, th_t)

        for n_ls in range(opt.ls_max_backtracks):
            z_t = z + alpha * dz
            s_t = s + alpha * ds
            accepted, f_type, th_t = try_point(z_t, s_t, alpha)
            if accepted:
                z_new, s_new = z_t, s_t
                break

            # second-order correction after the first rejected full step
            if n_ls == 0 and th_t >= th_k and opt.max_soc > 0 and not soc_done:
                soc_done = True
                trial0 = problem.evaluate(z_t, order=0)
                c_eq_soc = alpha * bundle.c_eq + trial0.c_eq
                r3_soc = alpha * (bundle.c_ineq + s) + (trial0.c_ineq + s_t)
                th_prev = th_t
                for _ in range(opt.max_soc):
                    rhs_soc = np.concatenate([
                        rhs[:n], -c_eq_soc, -r3_soc + s - mu / y_in])
                    step_c = lu.solve(rhs_soc)
                    dz_c = step_c[:n]
                    ds_c = -r3_soc - bundle.j_ineq @ dz_c
                    a_soc = min(
                        _fraction_to_boundary(d_lo, dz_c, tau, bar.fin_lo),
                        _fraction_to_boundary(d_hi, -dz_c, tau, bar.fin_hi),
                        _fraction_to_boundary(s, ds_c, tau))
                    z_c = z + a_soc * dz_c
                    s_c = s + a_soc * ds_c
                    ok_c, f_type_c, th_c = try_point(z_c, s_c, a_max)
                    if ok_c:
                        accepted, f_type = True, f_type_c
                        dz, ds = dz_c, ds_c
                        dy_eq = step_c[n:n + m_eq]
                        dy_in = step_c[n + m_eq:]
                        dz_l = np.where(bar.fin_lo,
                                        mu / d_lo - z_l - (z_l / d_lo) * dz_c, 0.0)
                        dz_u = np.where(bar.fin_hi,
                                        mu / d_hi - z_u + (z_u / d_hi) * dz_c, 0.0)
                        a_dual = min(
                            _fraction_to_boundary(z_l, dz_l, tau, bar.fin_lo),
                            _fraction_to_boundary(z_u, dz_u, tau, bar.fin_hi),
                            _fraction_to_boundary(y_in, dy_in, tau))
                        alpha = a_soc
                        z_new, s_new = z_c, s_c
                        break
                    if not np.isfinite(th_c) or th_c > opt.kappa_soc * th_prev:
                        break
                    th_prev = th_c
                    trial_c = problem.evaluate(z_c, order=0)
                    c_eq_soc = a_soc * c_eq_soc + trial_c.c_eq
                    r3_soc = a_soc * r3_soc + (trial_c.c_ineq + s_c)
                if accepted:
                    break

            alpha *= 0.5
            if alpha < alpha_min:
                break

        if not accepted:
            if not just_reset:
                # reinitialize slacks and duals around the current point,
                # clear the filter and force extra damping, then retry
                just_reset = True
                s = np.maximum(-bundle.c_ineq, opt.slack_floor)
                y_in = np.clip(mu / s, 1e-8, 1e4)
                d_lo, d_hi = bar.gaps(z)
                z_l = np.where(bar.fin_lo, mu / d_lo, 0.0)
                z_u = np.where(bar.fin_hi, mu / d_hi, 0.0)
                filt = [(theta_max_f, -np.inf)]
                delta_w_last = max(delta_w_last, opt.delta_w0) * 10.0
                it += 1
                log.append((it, bundle.f, primal0, dual0, mu, 0.0, delta_w))
                if opt.verbose:
                    print(f"{it:4d}  reset: line search failed, "
                          f"reinitializing duals (mu={mu:.2e})")
                continue
            status = ("infeasible"
                      if primal0 > max(1e-4, 100 * opt.tol_feas)
                      else "numerical")
            message = "filter line search failed"
            break
        just_reset = False

        z = z_new
        s = np.maximum(s_new, 1e-300)
        y_eq = y_eq + alpha * dy_eq
        y_in = y_in + a_dual * dy_in
        z_l = z_l + a_dual * dz_l
        z_u = z_u + a_dual * dz_u
        # dual safeguard: keep bound duals commensurate with mu
        d_lo, d_hi = bar.gaps(z)
        z_l = np.where(bar.fin_lo,
                       np.clip(z_l, mu / (opt.kappa_sigma * d_lo),
                               opt.kappa_sigma * mu / d_lo), 0.0)
        z_u = np.where(bar.fin_hi,
                       np.clip(z_u, mu / (opt.kappa_sigma * d_hi),
                               opt.kappa_sigma * mu / d_hi), 0.0)
        y_in = np.clip(y_in, mu / (opt.kappa_sigma * s),
                       opt.kappa_sigma * mu / s)
        if not f_type:
            filt.append(((1.0 - opt.gamma_theta) * th_k,
                         phi_k - opt.gamma_phi * th_k))

        bundle = problem.evaluate(z, order=1)
        it += 1
        row = (it, bundle.f, primal0, dual0, mu, alpha, delta_w)
        log.append(row)
        if opt.verbose:
            if it == 1:
                print(f"{'iter':>4} {'objective':>14} {'inf_pr':>10} "
                      f"{'inf_du':>10} {'mu':>9} {'alpha':>9} {'reg':>9}")
            print(f"{it:4d} {bundle.f:14.7e} {primal0:10.3e} "
                  f"{dual0:10.3e} {mu:9.2e} {alpha:9.2e} {delta_w:9.2e}")

    primal0, dual0, comp0 = kkt_errors(bundle, 0.0)
    return SolveResult(
        status=status, iterations=it, objective=float(bundle.f),
        primal_inf=primal0, dual_inf=dual0, complementarity=comp0,
        solve_time=time.perf_counter() - t0, message=message,
        z=z, y_eq=y_eq, y_ineq=y_in, slacks=s, mu_final=mu,
        iteration_log=log)


def solve_with_scipy(problem, options=None):
    """Cross-check path: the same problem through scipy's trust-constr.

    Uses the problem's exact gradients, Jacobians and Hessian contractions.
    Intended for small instances and validation runs, not for production
    races.
    """
    from scipy.optimize import Bounds, NonlinearConstraint, minimize

    opt = options or SolverOptions()
    t0 = time.perf_counter()

    def c_eq(zz):
        return problem.evaluate(zz, order=0).c_eq

    def c_in(zz):
        return problem.evaluate(zz, order=0).c_ineq

    con_eq = NonlinearConstraint(
        c_eq, 0.0, 0.0,
        jac=lambda zz: problem.evaluate(zz, order=1).j_eq,
        hess=lambda zz, v: problem.hess_lagrangian(zz, 0.0, v, np.zeros(problem.m_ineq)).toarray())
    con_in = NonlinearConstraint(
        c_in, -np.inf, 0.0,
        jac=lambda zz: problem.evaluate(zz, order=1).j_ineq,
        hess=lambda zz, v: problem.hess_lagrangian(zz, 0.0, np.zeros(problem.m_eq), v).toarray())
    res = minimize(
        problem.objective, problem.z0, jac=problem.gradient,
        hess=lambda zz: problem.hess_lagrangian(
            zz, 1.0, np.zeros(problem.m_eq), np.zeros(problem.m_ineq)).toarray(),
        bounds=Bounds(problem.lo, problem.hi),
        constraints=[con_eq, con_in], method="trust-constr",
        options={"gtol": opt.tol_opt, "xtol": 1e-12,
                 "maxiter": opt.max_iter * 10, "verbose": 0})
    z = np.asarray(res.x)
    b = problem.evaluate(z, order=0)
    primal = max(float(np.abs(b.c_eq).max()) if problem.m_eq else 0.0,
                 float(np.maximum(b.c_ineq, 0.0).max()) if problem.m_ineq else 0.0)
    status = "optimal" if res.status in (1, 2) else "numerical"
    return SolveResult(
        status=status, iterations=int(res.niter), objective=float(res.fun),
        primal_inf=primal, dual_inf=float(res.optimality),
        complementarity=0.0, solve_time=time.perf_counter() - t0,
        message=str(res.message), z=z,
        y_eq=np.asarray(res.v[0]) if res.v else np.zeros(problem.m_eq),
        y_ineq=np.asarray(res.v[1]) if len(res.v) > 1 else np.zeros(problem.m_ineq))
