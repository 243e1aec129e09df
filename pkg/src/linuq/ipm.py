"""Primal-dual interior-point core for the interval and slack programs.

Solves

    minimize    c'x  [+ ||y0 - K0 x||^2]
    subject to  ||y - K x||^2 <= r^2        (optional quadratic ball)
                G x <= g                    (affine rows)

with a Mehrotra-style predictor-corrector on the perturbed KKT system.
The quadratic ball is handled as a single second-order constraint with a
log-barrier; the affine rows get standard inequality barriers.  Because
the ball is nonlinear, primal and dual variables share one step length,
chosen by fraction-to-boundary ratios followed by a backtracking line
search on the perturbed KKT residual.  Iterates stay strictly feasible,
so the caller must supply a strictly feasible start.  Dense Newton
systems are cheap at the intended p (tens to low hundreds).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SolverStall

MAX_ITER = 200
TOL = 1e-8


@dataclass
class SolverStats:
    iterations: int = 0
    dual_residual: float = np.nan
    gap: float = np.nan
    converged: bool = False
    regularized: bool = False
    notes: dict = field(default_factory=dict)


@dataclass
class IPMResult:
    x: np.ndarray
    objective: float
    lam_rows: np.ndarray
    lam_ball: float
    slack_rows: np.ndarray
    slack_ball: float
    stats: SolverStats = None


class _Ball:
    """State for the constraint ||y - K x||^2 <= r2, also reused (without a
    radius) as the residual objective of the slack program."""

    def __init__(self, K, y, r2=None, KtK2=None):
        self.K = np.asarray(K, dtype=float)
        self.y = np.asarray(y, dtype=float).ravel()
        self.r2 = r2
        self.KtK2 = 2.0 * (self.K.T @ self.K) if KtK2 is None else KtK2

    def resid_sq(self, x):
        r = self.y - self.K @ x
        return float(r @ r)

    def grad(self, x):
        # gradient of ||y - Kx||^2
        return 2.0 * (self.K.T @ (self.K @ x - self.y))


def _chol_solve(M, rhs, scale):
    """Solve M z = rhs with escalating ridge on factorization failure.

    The ridge only stabilizes the Newton direction along numerically flat
    directions; it does not alter the optimization problem.
    """
    ridge = 0.0
    p = M.shape[0]
    for _ in range(8):
        try:
            cf = scipy.linalg.cho_factor(
                M + ridge * np.eye(p) if ridge else M,
                lower=True, check_finite=False,
            )
            return scipy.linalg.cho_solve(cf, rhs, check_finite=False), ridge > 0
        except scipy.linalg.LinAlgError:
            ridge = max(ridge * 100.0, 1e-14 * scale)
    raise SolverStall("Newton system factorization failed beyond ridge cap")


def solve_ipm(
    c,
    x0,
    rows_G=None,
    rows_g=None,
    ball=None,
    resid_objective=None,
    tol=TOL,
    max_iter=MAX_ITER,
):
    """Run the predictor-corrector iteration.

    Parameters
    ----------
    c : (p,) ndarray
        Linear objective term.
    x0 : (p,) ndarray
        Strictly feasible start (all row slacks and the ball slack positive).
    rows_G, rows_g : ndarray, optional
        Affine inequality system G x <= g.
    ball : _Ball, optional
        Quadratic ball constraint (must carry r2).
    resid_objective : _Ball, optional
        Adds ||y0 - K0 x||^2 to the objective (slack program).
    """
    c = np.asarray(c, dtype=float).ravel()
    p = c.size
    x = np.asarray(x0, dtype=float).ravel().copy()
    G = np.zeros((0, p)) if rows_G is None else np.asarray(rows_G, dtype=float)
    g = np.zeros(0) if rows_g is None else np.asarray(rows_g, dtype=float).ravel()
    q = G.shape[0]
    has_ball = ball is not None
    m = q + (1 if has_ball else 0)
    if m == 0:
        raise ValueError("interior-point core needs at least one inequality")
    ball_edge = ball.r2 * (1.0 - 1e-12) if has_ball else None

    def slacks(xv):
        s_rows = g - G @ xv
        s_ball = (ball.r2 - ball.resid_sq(xv)) if has_ball else 0.0
        return s_rows, s_ball

    def objective(xv):
        val = float(c @ xv)
        if resid_objective is not None:
            val += resid_objective.resid_sq(xv)
        return val

    def obj_grad(xv):
        gr = c.copy()
        if resid_objective is not None:
            gr += resid_objective.grad(xv)
        return gr

    def dual_res(xv, lr, lb, grad_ball):
        r = obj_grad(xv)
        if q:
            r = r + G.T @ lr
        if has_ball:
            r = r + lb * grad_ball
        return r

    def kkt_norm(xv, lr, lb, target):
        """Norm of the sigma*mu-perturbed KKT residual at a trial point."""
        s_r, s_b = slacks(xv)
        gb = ball.grad(xv) if has_ball else None
        parts = [dual_res(xv, lr, lb, gb)]
        if q:
            parts.append(lr * s_r - target)
        if has_ball:
            parts.append(np.array([lb * s_b - target]))
        return float(np.linalg.norm(np.concatenate(parts)))

    s_rows, s_ball = slacks(x)
    if (q and s_rows.min() <= 0.0) or (has_ball and s_ball <= 0.0):
        raise ValueError("x0 is not strictly feasible")

    obj_scale = 1.0 + np.linalg.norm(c)
    if resid_objective is not None:
        obj_scale += np.linalg.norm(resid_objective.grad(x))

    lam_rows = 1.0 / np.maximum(s_rows, 1e-10) if q else np.zeros(0)
    lam_ball = 1.0 / max(s_ball, 1e-10) if has_ball else 0.0

    stats = SolverStats()
    regularized = False
    no_progress = 0
    prev_failed = False

    for it in range(max_iter):
        grad_ball = ball.grad(x) if has_ball else None
        r_dual = dual_res(x, lam_rows, lam_ball, grad_ball)
        gap = float(lam_rows @ s_rows) if q else 0.0
        if has_ball:
            gap += lam_ball * s_ball
        mu = gap / m
        obj = objective(x)

        dual_scale = obj_scale + (np.linalg.norm(G.T @ lam_rows) if q else 0.0)
        if has_ball:
            dual_scale += abs(lam_ball) * np.linalg.norm(grad_ball)
        rd_norm = float(np.linalg.norm(r_dual))

        stats.iterations = it
        stats.dual_residual = rd_norm
        stats.gap = gap
        if rd_norm <= tol * dual_scale and gap <= tol * (1.0 + abs(obj)):
            stats.converged = True
            break

        # Newton matrix: objective curvature + constraint curvature + barrier
        M = np.zeros((p, p))
        if resid_objective is not None:
            M += resid_objective.KtK2
        if q:
            M += (G.T * (lam_rows / s_rows)) @ G
        if has_ball:
            M += lam_ball * ball.KtK2
            M += (lam_ball / s_ball) * np.outer(grad_ball, grad_ball)
        # Levenberg damping: bounds step length along numerically flat
        # directions without moving the KKT fixed point (residuals are
        # always evaluated exactly).
        damp = rd_norm / (100.0 * (1.0 + np.linalg.norm(x)))
        if damp > 0.0:
            M[np.diag_indices_from(M)] += damp
        m_scale = max(np.trace(M) / p, 1e-30)

        def direction(target, corr_rows, corr_ball):
            rhs = -r_dual.astype(float)
            if q:
                rhs = rhs - G.T @ ((target - lam_rows * s_rows - corr_rows) / s_rows)
            if has_ball:
                rhs = rhs - grad_ball * (
                    (target - lam_ball * s_ball - corr_ball) / s_ball
                )
            dx, did_reg = _chol_solve(M, rhs, m_scale)
            ds_rows = -(G @ dx) if q else np.zeros(0)
            dlam_rows = (
                (target - lam_rows * s_rows - corr_rows - lam_rows * ds_rows)
                / s_rows
                if q
                else np.zeros(0)
            )
            if has_ball:
                ds_ball = -float(grad_ball @ dx)
                dlam_ball = (
                    target - lam_ball * s_ball - corr_ball - lam_ball * ds_ball
                ) / s_ball
            else:
                ds_ball, dlam_ball = 0.0, 0.0
            return dx, dlam_rows, dlam_ball, ds_rows, ds_ball, did_reg

        def boundary_step(dlam_rows, dlam_ball, ds_rows, ds_ball, frac):
            """Largest common step keeping lambda and linear slacks positive."""
            a = 1.0
            if q:
                neg = dlam_rows < 0
                if neg.any():
                    a = min(a, frac * float(np.min(-lam_rows[neg] / dlam_rows[neg])))
                neg = ds_rows < 0
                if neg.any():
                    a = min(a, frac * float(np.min(-s_rows[neg] / ds_rows[neg])))
            if has_ball:
                if dlam_ball < 0:
                    a = min(a, frac * (-lam_ball / dlam_ball))
                if ds_ball < 0:
                    a = min(a, frac * (-s_ball / ds_ball))
            return a

        # predictor (affine scaling) — only to set the centering target
        dxa, dlra, dlba, dsra, dsba, reg1 = direction(0.0, np.zeros(q), 0.0)
        a_aff = boundary_step(dlra, dlba, dsra, dsba, 1.0)
        if has_ball:
            while a_aff > 1e-14 and ball.resid_sq(x + a_aff * dxa) >= ball_edge:
                a_aff *= 0.8
        mu_aff = float((lam_rows + a_aff * dlra) @ (s_rows + a_aff * dsra)) if q else 0.0
        if has_ball:
            mu_aff += (lam_ball + a_aff * dlba) * max(
                ball.r2 - ball.resid_sq(x + a_aff * dxa), 0.0
            )
        mu_aff = max(mu_aff / m, 0.0)
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.1
        if prev_failed:
            sigma = max(sigma, 0.5)

        # corrector with Mehrotra second-order terms
        target = sigma * mu
        corr_rows = dlra * dsra if q else np.zeros(0)
        corr_ball = dlba * dsba if has_ball else 0.0
        dx, dlr, dlb, dsr, dsb, reg2 = direction(target, corr_rows, corr_ball)
        regularized = regularized or reg1 or reg2

        tau = max(0.995, 1.0 - 0.1 * mu)
        alpha = boundary_step(dlr, dlb, dsr, dsb, tau)
        if has_ball:
            while alpha > 1e-14 and ball.resid_sq(x + alpha * dx) >= ball_edge:
                alpha *= 0.8

        # backtracking on the perturbed KKT residual with a common step
        psi0 = kkt_norm(x, lam_rows, lam_ball, target)
        accepted = False
        a_try = alpha
        for _ in range(40):
            if a_try <= 1e-16:
                break
            x_t = x + a_try * dx
            lr_t = lam_rows + a_try * dlr
            lb_t = lam_ball + a_try * dlb
            s_r_t, s_b_t = slacks(x_t)
            strict = (not q or (s_r_t.min() > 0 and lr_t.min() > 0)) and (
                not has_ball or (s_b_t > 0 and lb_t > 0)
            )
            if strict and kkt_norm(x_t, lr_t, lb_t, target) <= (1.0 - 0.01 * a_try) * psi0:
                accepted = True
                break
            a_try *= 0.5
        if not accepted:
            # pure centering rescue: aim at the current mu without correctors
            dx, dlr, dlb, dsr, dsb, _ = direction(mu, np.zeros(q), 0.0)
            a_try = boundary_step(dlr, dlb, dsr, dsb, 0.9)
            if has_ball:
                while a_try > 1e-14 and ball.resid_sq(x + a_try * dx) >= ball_edge:
                    a_try *= 0.8
            psi0 = kkt_norm(x, lam_rows, lam_ball, mu)
            ok = False
            for _ in range(40):
                if a_try <= 1e-16:
                    break
                x_t = x + a_try * dx
                lr_t = lam_rows + a_try * dlr
                lb_t = lam_ball + a_try * dlb
                s_r_t, s_b_t = slacks(x_t)
                strict = (not q or (s_r_t.min() > 0 and lr_t.min() > 0)) and (
                    not has_ball or (s_b_t > 0 and lb_t > 0)
                )
                if strict and kkt_norm(x_t, lr_t, lb_t, mu) <= (1.0 - 0.01 * a_try) * psi0:
                    ok = True
                    break
                a_try *= 0.5
            if not ok:
                no_progress += 1
                prev_failed = True
                if no_progress >= 6:
                    break
                continue
            prev_failed = True
        else:
            prev_failed = False
        no_progress = 0

        x = x + a_try * dx
        if q:
            lam_rows = lam_rows + a_try * dlr
        if has_ball:
            lam_ball = lam_ball + a_try * dlb
        s_rows, s_ball = slacks(x)
    else:
        stats.iterations = max_iter

    stats.regularized = regularized
    if not stats.converged:
        raise SolverStall(
            f"interior-point method stalled after {stats.iterations} iterations "
            f"(dual residual {stats.dual_residual:.2e}, gap {stats.gap:.2e})"
        )
    return IPMResult(
        x=x,
        objective=objective(x),
        lam_rows=lam_rows,
        lam_ball=float(lam_ball) if has_ball else 0.0,
        slack_rows=s_rows,
        slack_ball=float(s_ball) if has_ball else np.nan,
        stats=stats,
    )
