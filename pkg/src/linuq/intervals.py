"""Frequentist confidence intervals for h'x by constrained convex programming.

The interval endpoints are the extreme values of h'x over the intersection
of a data ball { ||y - Kx||^2 <= r^2 } with the affine constraint set
{ Ax <= b }.  The ball radius is slack-calibrated for one-at-a-time
coverage (r^2 = z^2 + s^2 with s^2 the minimum constrained residual) or a
chi-square quantile for simultaneous coverage.  Both endpoints carry dual
certificates that are independently re-checkable from (w, c) alone.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from . import ipm
from .constraints import ConstraintSet
from .errors import (
    CertificateUnavailable,
    EmptyConfidenceSet,
    InfeasibleConstraints,
    RankDeficient,
    UnboundedFunctional,
)
from .problem import DEFAULT_RANK_TOL
from .stats import chi2_quantile, z_value

ONE_AT_A_TIME = "one_at_a_time"
SIMULTANEOUS = "simultaneous"

CERT_TOL = 1e-6


@dataclass(frozen=True)
class DualCertificate:
    """Dual-feasible pair certifying one endpoint.

    ``objective`` is the dual objective value computed from (w, c) alone and
    ``gap`` its distance to the primal endpoint; ``endpoint`` is "lower" or
    "upper".
    """

    w: np.ndarray
    c: np.ndarray
    objective: float
    gap: float
    endpoint: str


@dataclass
class IntervalResult:
    lower: float
    upper: float
    slack_sq: float
    radius_sq: float
    x_at_lower: np.ndarray
    x_at_upper: np.ndarray
    dual_lower: DualCertificate = None
    dual_upper: DualCertificate = None
    solver_stats: dict = field(default_factory=dict)
    method: str = "frequentist"
    mode: str = ONE_AT_A_TIME

    @property
    def length(self):
        return self.upper - self.lower


@dataclass(frozen=True)
class SvdReduction:
    """p-variate reduction of a tall whitened problem.

    For every x, ``||y_w - K_w x||^2 = ||y_top - operator @ x||^2 + tail_sq``.
    """

    operator: np.ndarray
    y_top: np.ndarray
    tail_sq: float
    u_top: np.ndarray
    y_tail_vec: np.ndarray


def svd_reduce(problem_w, y_w):
    """Reduce an n-variate residual to an equivalent p-variate one."""
    K = problem_w.K_w
    n, p = K.shape
    if n < p:
        raise ValueError("reduction requires n >= p")
    U, s, Vt = np.linalg.svd(K, full_matrices=False)
    operator = s[:, None] * Vt
    y_top = U.T @ y_w
    tail_vec = y_w - U @ y_top
    tail_sq = float(tail_vec @ tail_vec)
    return SvdReduction(
        operator=operator, y_top=y_top, tail_sq=tail_sq, u_top=U,
        y_tail_vec=tail_vec,
    )


# ---------------------------------------------------------------------------
# feasibility helpers


def find_strictly_feasible(cs):
    """A point with A x < b (strict), or raise InfeasibleConstraints.

    Per-coordinate rows are resolved directly; general rows fall back to a
    phase-one linear program whose dual marginals serve as the
    infeasibility certificate.
    """
    p = cs.p
    if cs.q == 0:
        return np.zeros(p)
    lo = np.full(p, -np.inf)
    hi = np.full(p, np.inf)
    general = []
    for row, rhs in zip(cs.A, cs.b):
        nz = np.nonzero(row)[0]
        if nz.size == 1:
            i = nz[0]
            if row[i] > 0:
                hi[i] = min(hi[i], rhs / row[i])
            else:
                lo[i] = max(lo[i], rhs / row[i])
        else:
            general.append((row, rhs))
    bad = np.nonzero(lo > hi)[0]
    if bad.size:
        i = int(bad[0])
        raise InfeasibleConstraints(
            f"coordinate {i}: lower bound {lo[i]} exceeds upper bound {hi[i]}"
        )
    x = np.zeros(p)
    for i in range(p):
        if np.isfinite(lo[i]) and np.isfinite(hi[i]):
            x[i] = 0.5 * (lo[i] + hi[i])
        elif np.isfinite(lo[i]):
            x[i] = lo[i] + 1.0
        elif np.isfinite(hi[i]):
            x[i] = hi[i] - 1.0
    if not general:
        return x
    if all(row @ x < rhs for row, rhs in general):
        return x
    # phase one: minimize t subject to Ax - t <= b
    A_ub = np.hstack([cs.A, -np.ones((cs.q, 1))])
    res = linprog(
        c=np.r_[np.zeros(p), 1.0],
        A_ub=A_ub,
        b_ub=cs.b,
        bounds=[(None, None)] * p + [(-1.0, None)],
        method="highs",
    )
    if res.status != 0:
        raise InfeasibleConstraints(f"phase-one LP failed: {res.message}")
    t_star = res.x[-1]
    if t_star >= -1e-11:
        cert = None
        if res.ineqlin is not None:
            cert = np.asarray(res.ineqlin.marginals)
        raise InfeasibleConstraints(
            "constraint set has empty interior "
            f"(phase-one optimum {t_star:.3e})",
            certificate=cert,
        )
    return res.x[:p]


def check_functional_bounded(K, h, cs, rank_tol=DEFAULT_RANK_TOL):
    """Raise UnboundedFunctional when h'x is unbounded over the feasible set.

    h restricted to the numerical null space of K is tested over the
    recession cone of the constraint rows via a small auxiliary LP.
    """
    _, s, Vt = np.linalg.svd(K, full_matrices=True)
    p = K.shape[1]
    top = s[0] if s.size else 0.0
    rank = int(np.count_nonzero(s > rank_tol * top)) if top > 0 else 0
    if rank == p:
        return
    N = Vt[rank:].T  # p x (p - rank) null basis
    hN = N.T @ h
    tol = 1e-9 * (1.0 + np.linalg.norm(h))
    if np.linalg.norm(hN) <= tol:
        return
    if cs.q == 0:
        raise UnboundedFunctional(
            "h has a null-space component and there are no constraints"
        )
    AN = cs.A @ N
    k = N.shape[1]
    for sign, side in ((1.0, "lower"), (-1.0, "upper")):
        res = linprog(
            c=sign * hN,
            A_ub=AN,
            b_ub=np.zeros(cs.q),
            bounds=[(-1.0, 1.0)] * k,
            method="highs",
        )
        if res.status == 0 and res.fun < -tol:
            raise UnboundedFunctional(
                f"h'x is unbounded ({side} endpoint): the constraints do not "
                "control the forward operator's null space"
            )


# ---------------------------------------------------------------------------
# presolve: pin coordinates confined to a numerically tight slab


PIN_WIDTH = 1e-7


@dataclass(frozen=True)
class _Presolve:
    """Coordinates pinned to (near-)equality slabs, plus the reduced rows."""

    free: np.ndarray
    pinned: np.ndarray
    pin_values: np.ndarray
    keep_rows: np.ndarray
    A_red: np.ndarray
    b_red: np.ndarray
    pin_pos_row: dict
    pin_neg_row: dict

    @property
    def trivial(self):
        return self.pinned.size == 0


def _presolve(cs):
    p = cs.p
    lo = np.full(p, -np.inf)
    hi = np.full(p, np.inf)
    lo_row = {}
    hi_row = {}
    single = np.zeros(cs.q, dtype=bool)
    for j, (row, rhs) in enumerate(zip(cs.A, cs.b)):
        nz = np.nonzero(row)[0]
        if nz.size != 1:
            continue
        single[j] = True
        i = int(nz[0])
        bound = rhs / row[i]
        if row[i] > 0:
            if bound < hi[i]:
                hi[i] = bound
                hi_row[i] = j
        else:
            if bound > lo[i]:
                lo[i] = bound
                lo_row[i] = j
    bad = np.nonzero(lo > hi)[0]
    if bad.size:
        i = int(bad[0])
        raise InfeasibleConstraints(
            f"coordinate {i}: lower bound {lo[i]} exceeds upper bound {hi[i]}"
        )
    width = hi - lo
    finite = np.isfinite(width)
    mid = np.zeros(p)
    mid[finite] = 0.5 * (lo[finite] + hi[finite])
    pin_mask = np.isfinite(width) & (width <= PIN_WIDTH * np.maximum(1.0, np.abs(mid)))
    pinned = np.nonzero(pin_mask)[0]
    free = np.nonzero(~pin_mask)[0]
    if pinned.size == 0:
        return _Presolve(free, pinned, np.zeros(0), np.arange(cs.q),
                         cs.A, cs.b, {}, {})
    v = mid[pinned]
    # a single-coordinate row on a pinned coordinate is replaced by the pin
    drop = np.zeros(cs.q, dtype=bool)
    for j, row in enumerate(cs.A):
        if not single[j]:
            continue
        i = int(np.nonzero(row)[0][0])
        if pin_mask[i]:
            drop[j] = True
    keep = np.nonzero(~drop)[0]
    A_keep = cs.A[keep]
    b_keep = cs.b[keep]
    shift = A_keep[:, pinned] @ v if keep.size else np.zeros(0)
    A_red = A_keep[:, free]
    b_red = b_keep - shift
    # rows now touching no free coordinate must hold identically
    if keep.size:
        nontrivial = np.any(A_red != 0.0, axis=1)
        viol = ~nontrivial & (b_red < -1e-9 * np.maximum(1.0, np.abs(b_keep)))
        if viol.any():
            j = int(keep[np.nonzero(viol)[0][0]])
            raise InfeasibleConstraints(
                f"constraint row {j} is violated by the pinned coordinates"
            )
        keep = keep[nontrivial]
        A_red = A_red[nontrivial]
        b_red = b_red[nontrivial]
    pin_pos = {int(i): int(hi_row[i]) for i in pinned}
    pin_neg = {int(i): int(lo_row[i]) for i in pinned}
    return _Presolve(free, pinned, v, keep, A_red, b_red, pin_pos, pin_neg)


def _assemble(ps, x_red, p):
    x = np.empty(p)
    x[ps.free] = x_red
    if ps.pinned.size:
        x[ps.pinned] = ps.pin_values
    return x


def _reduced_cs(cs, ps):
    if ps.trivial:
        return cs
    reduced = ConstraintSet(int(ps.free.size))
    object.__setattr__(reduced, "A", ps.A_red)
    object.__setattr__(reduced, "b", ps.b_red)
    return reduced


def _reconstruct_rowdual(ps, cs, K, h, w, c_red, endpoint):
    """Full-length row multipliers: kept rows keep theirs, slab rows get the
    exact stationarity force split into the +/- pair.

    The dual constraint requires (A'c)_i = (K'w - h)_i at a lower endpoint
    and (h - K'w)_i at an upper endpoint for every pinned coordinate i.
    """
    c = np.zeros(cs.q)
    if ps.keep_rows.size:
        c[ps.keep_rows] = c_red
    if ps.pinned.size:
        needed = K.T @ w - h if endpoint == "lower" else h - K.T @ w
        if ps.keep_rows.size:
            needed = needed - cs.A[ps.keep_rows].T @ c_red
        for i in ps.pinned:
            i = int(i)
            force = needed[i]
            a_pos = cs.A[ps.pin_pos_row[i], i]
            a_neg = cs.A[ps.pin_neg_row[i], i]
            c[ps.pin_pos_row[i]] = max(force, 0.0) / a_pos
            c[ps.pin_neg_row[i]] = max(-force, 0.0) / (-a_neg)
    return c


def _blend_inward(cs, x_int, x_target):
    """Move from a safe interior point toward a target while keeping a
    fraction of the interior margin on every row (warm start heuristic)."""
    s_int = cs.b - cs.A @ x_int
    floor = 0.02 * float(s_int.min())
    beta = 1.0
    for _ in range(40):
        cand = x_int + beta * (x_target - x_int)
        if float(np.min(cs.b - cs.A @ cand)) > floor:
            return cand
        beta *= 0.6
    return x_int


# ---------------------------------------------------------------------------
# slack program


def _slack_full(K, y, cs):
    """Solve min ||y - Kx||^2 over Ax <= b.

    Returns (s_sq, x_feas, x_interior, stats_dict).
    """
    p = K.shape[1]
    ps = _presolve(cs)
    if ps.pinned.size:
        K_red = K[:, ps.free]
        y_adj = y - K[:, ps.pinned] @ ps.pin_values
        cs_red = _reduced_cs(cs, ps)
        if ps.free.size == 0:
            r = y_adj
            x = _assemble(ps, np.zeros(0), p)
            return float(r @ r), x, x, {"iterations": 0, "kkt_residual": 0.0,
                                        "pinned": int(ps.pinned.size)}
        s_sq, xr, xr_int, stats = _slack_full(K_red, y_adj, cs_red)
        stats["pinned"] = int(ps.pinned.size)
        return s_sq, _assemble(ps, xr, p), _assemble(ps, xr_int, p), stats
    if cs.q == 0:
        x, _, _, _ = np.linalg.lstsq(K, y, rcond=None)
        r = y - K @ x
        return float(r @ r), x, x, {"iterations": 0, "kkt_residual": 0.0}
    x_int = find_strictly_feasible(cs)
    x0 = _blend_inward(cs, x_int, np.linalg.lstsq(K, y, rcond=None)[0])
    W, Winv = _precondition(K)
    At_raw = cs.A @ W
    nu = np.maximum(np.linalg.norm(At_raw, axis=1), 1e-300)
    res = ipm.solve_ipm(
        c=np.zeros(K.shape[1]),
        x0=Winv @ x0,
        rows_G=At_raw / nu[:, None],
        rows_g=cs.b / nu,
        resid_objective=ipm._Ball(K @ W, y),
    )
    stats = {
        "iterations": res.stats.iterations,
        "kkt_residual": res.stats.dual_residual,
        "gap": res.stats.gap,
        "regularized": res.stats.regularized,
    }
    return float(res.objective), W @ res.x, x_int, stats


def solve_slack(problem_w, y_w, constraints):
    """Minimum constrained residual sum of squares and a minimizer."""
    s_sq, x_feas, _, _ = _slack_full(problem_w.K_w, y_w, constraints)
    return s_sq, x_feas


# ---------------------------------------------------------------------------
# endpoint programs


def _precondition(K, floor_rel=1e-5):
    """Right preconditioner W = V diag(1/sigma) making the ball isotropic.

    Small singular values are floored relative to the top one: the floor
    trades ball conditioning (wants 1/sigma exactly) against the geometric
    crushing of constraint slacks along weak directions (wants moderate
    column scales).  x = W xi is an exact invertible reparametrization, so
    solutions and multipliers map back without approximation.
    """
    _, s, Vt = np.linalg.svd(K, full_matrices=False)
    top = s[0] if s.size and s[0] > 0 else 1.0
    sf = np.maximum(s, floor_rel * top)
    W = Vt.T / sf
    Winv = sf[:, None] * Vt
    return W, Winv


def _repair_interior(A, b, xi):
    """Nudge a point whose row slacks are at floating-point scale (possibly
    slightly negative) strictly inside, via a minimum-norm correction."""
    if A is None or A.shape[0] == 0:
        return xi
    floor = 1e-12 * (1.0 + np.abs(b))
    for _ in range(6):
        s = b - A @ xi
        bad = s < floor
        if not bad.any():
            break
        Ab = A[bad]
        gram = Ab @ Ab.T
        gram[np.diag_indices_from(gram)] += 1e-14
        try:
            u = scipy.linalg.solve(gram, s[bad] - 2.0 * floor[bad], assume_a="pos")
        except scipy.linalg.LinAlgError:
            break
        xi = xi + Ab.T @ u
    return xi


def _center_point(ball, A, b, xi0, iters=15):
    """Damped Newton ascent of the log-barrier potential of the lens,
    starting strictly feasible (used to move off active rows)."""
    x = np.asarray(xi0, dtype=float).copy()
    if A is None or A.shape[0] == 0:
        return x
    for _ in range(iters):
        s_rows = b - A @ x
        s_ball = ball.r2 - ball.resid_sq(x)
        gb = ball.grad(x)
        grad = -(A / s_rows[:, None]).sum(axis=0) - gb / s_ball
        H = (A.T / s_rows) @ (A / s_rows[:, None])
        H += np.outer(gb, gb) / s_ball ** 2 + ball.KtK2 / s_ball
        H[np.diag_indices_from(H)] += 1e-10 * max(np.trace(H) / H.shape[0], 1e-30)
        try:
            dx = scipy.linalg.solve(H, grad, assume_a="pos")
        except scipy.linalg.LinAlgError:
            break
        if float(grad @ dx) <= 1e-6:
            break
        t = 1.0
        phi0 = -np.log(s_rows).sum() - np.log(s_ball)
        improved = False
        for _ in range(30):
            cand = x + t * dx
            s_c = b - A @ cand
            if s_c.size == 0 or s_c.min() > 0.0:
                sb_c = ball.r2 - ball.resid_sq(cand)
                if sb_c > 0.0 and -np.log(s_c).sum() - np.log(sb_c) < phi0 - 1e-12:
                    x = cand
                    improved = True
                    break
            t *= 0.5
        if not improved:
            break
    return x


def _endpoint_core(K, y, h, r2, A, b, x_feas, endpoint):
    """One endpoint program, recentered at the slack minimizer and solved in
    preconditioned coordinates.

    Recentring keeps every ball-visible coordinate bounded by the radius, so
    constraint slacks stay resolvable in floating point; the preconditioner
    makes the ball isotropic.  Both transforms are exact.  Returns
    (theta, x, w, c_rows, stats) in the original coordinates of this
    (sub)problem.
    """
    sign = 1.0 if endpoint == "lower" else -1.0
    x_ref = np.asarray(x_feas, dtype=float)
    y_eff = y - K @ x_ref
    W, _ = _precondition(K)
    Kt = K @ W
    ht = W.T @ h
    q = 0 if A is None else A.shape[0]
    if q:
        At_raw = A @ W
        nu = np.maximum(np.linalg.norm(At_raw, axis=1), 1e-300)
        At = At_raw / nu[:, None]
        bt = (b - A @ x_ref) / nu
    else:
        At, bt, nu = None, None, None
    ball = ipm._Ball(Kt, y_eff, r2)
    xi0 = np.zeros(K.shape[1])
    xi0 = _repair_interior(At, bt, xi0)
    xi0 = _center_point(ball, At, bt, xi0)
    res = ipm.solve_ipm(
        c=sign * ht,
        x0=xi0,
        rows_G=At,
        rows_g=bt,
        ball=ball,
    )
    x = x_ref + W @ res.x
    theta = sign * res.objective + float(h @ x_ref)
    resid = y_eff - Kt @ res.x
    w = sign * 2.0 * res.lam_ball * resid
    c_rows = (res.lam_rows / nu) if q else np.zeros(0)
    return theta, x, w, c_rows, res.stats


def _make_certificate(y, r2, cs, c_full, w, endpoint, primal):
    objective = dual_objective(y, r2, cs, w, c_full, endpoint)
    gap = abs(primal - objective)
    return DualCertificate(w=w, c=c_full, objective=objective, gap=gap,
                           endpoint=endpoint)


def dual_objective(y, r2, cs, w, c, endpoint):
    """Dual objective value computed from (w, c) alone."""
    bc = float(cs.b @ c) if cs.q else 0.0
    root = np.sqrt(r2) * np.linalg.norm(w)
    if endpoint == "lower":
        return float(w @ y) - root - bc
    return float(w @ y) + root + bc


def stationarity_residual(K, h, cs, w, c, endpoint):
    """Residual of the dual constraint h +/- A'c - K'w = 0."""
    v = h - K.T @ w
    if cs.q:
        v = v + c @ cs.A if endpoint == "lower" else v - c @ cs.A
    return float(np.linalg.norm(v))


def verify_certificate(K, y, h, cs, r2, cert, primal=None, tol=CERT_TOL):
    """Re-check a certificate from (w, c) alone.

    Returns a dict of the recomputed quantities; raises nothing.  The
    certificate passes when the stationarity residual is within tolerance,
    c is (numerically) non-negative, and, if ``primal`` is given, the gap is
    within the relative tolerance.
    """
    st = stationarity_residual(K, h, cs, cert.w, cert.c, cert.endpoint)
    obj = dual_objective(y, r2, cs, cert.w, cert.c, cert.endpoint)
    ok = st <= tol * (1.0 + np.linalg.norm(h))
    ok = ok and (cert.c.size == 0 or float(cert.c.min()) >= -1e-10)
    gap = None
    if primal is not None:
        gap = abs(primal - obj)
        ok = ok and gap <= tol * (1.0 + abs(primal))
    return {"stationarity": st, "objective": obj, "gap": gap, "ok": bool(ok)}


def _endpoint_solve(K, y, h, r2, cs, x_start, endpoint):
    p = K.shape[1]
    ps = _presolve(cs)
    if ps.pinned.size:
        y_adj = y - K[:, ps.pinned] @ ps.pin_values
        offset = float(h[ps.pinned] @ ps.pin_values)
        if ps.free.size == 0:
            # fully determined state: the ball only gates feasibility
            x_full = _assemble(ps, np.zeros(0), p)
            theta = offset
            w = np.zeros(y.size)
            c_full = _reconstruct_rowdual(ps, cs, K, h, w, np.zeros(0), endpoint)
            cert = _make_certificate(y, r2, cs, c_full, w, endpoint, theta)
            return theta, x_full, cert, ipm.SolverStats(converged=True)
        K_red = K[:, ps.free]
        cs_red = _reduced_cs(cs, ps)
        theta_red, x_red, w, c_red, stats = _endpoint_core(
            K_red, y_adj, h[ps.free], r2,
            cs_red.A if cs_red.q else None,
            cs_red.b if cs_red.q else None,
            np.asarray(x_start, dtype=float)[ps.free],
            endpoint,
        )
        theta = theta_red + offset
        x_full = _assemble(ps, x_red, p)
        c_full = _reconstruct_rowdual(ps, cs, K, h, w, c_red, endpoint)
        cert = _make_certificate(y, r2, cs, c_full, w, endpoint, theta)
        return theta, x_full, cert, stats
    theta, x, w, c_full, stats = _endpoint_core(
        K, y, h, r2,
        cs.A if cs.q else None,
        cs.b if cs.q else None,
        x_start,
        endpoint,
    )
    cert = _make_certificate(y, r2, cs, c_full, w, endpoint, theta)
    return theta, x, cert, stats


def solve_interval_at_radius(problem_w, y_w, constraints, radius_sq,
                             slack=None, certify=True):
    """Extreme values of h'x over the ball of fixed radius and the rows.

    ``slack`` may carry a precomputed (s_sq, x_feas, x_interior) triple;
    otherwise the slack program is solved here to obtain a strictly
    feasible start.
    """
    K, h = problem_w.K_w, problem_w.h
    cs = constraints
    if slack is None:
        s_sq, x_feas, x_int, slack_stats = _slack_full(K, y_w, cs)
    else:
        s_sq, x_feas, x_int = slack
        slack_stats = {}
    if radius_sq <= s_sq + 1e-10 * (1.0 + s_sq):
        raise EmptyConfidenceSet(
            f"radius {radius_sq:.6g} does not exceed the minimum constrained "
            f"residual {s_sq:.6g}"
        )
    check_functional_bounded(K, h, cs)
    lower, x_lo, cert_lo, st_lo = _endpoint_solve(K, y_w, h, radius_sq, cs,
                                                  x_feas, "lower")
    upper, x_hi, cert_hi, st_hi = _endpoint_solve(K, y_w, h, radius_sq, cs,
                                                  x_feas, "upper")
    stats = {
        "slack": slack_stats,
        "lower_iterations": st_lo.iterations,
        "upper_iterations": st_hi.iterations,
        "lower_gap": st_lo.gap,
        "upper_gap": st_hi.gap,
        "certified": True,
    }
    if certify:
        for cert, primal in ((cert_lo, lower), (cert_hi, upper)):
            chk = verify_certificate(K, y_w, h, cs, radius_sq, cert, primal)
            if not chk["ok"]:
                stats["certified"] = False
    else:
        stats["certified"] = False
    return IntervalResult(
        lower=lower,
        upper=upper,
        slack_sq=s_sq,
        radius_sq=radius_sq,
        x_at_lower=x_lo,
        x_at_upper=x_hi,
        dual_lower=cert_lo,
        dual_upper=cert_hi,
        solver_stats=stats,
    )


def _radius_for(mode, alpha, s_sq, n):
    if mode == ONE_AT_A_TIME:
        return z_value(alpha) ** 2 + s_sq
    if mode == SIMULTANEOUS:
        return chi2_quantile(1.0 - alpha, n)
    raise ValueError(f"unknown radius mode {mode!r}")


def solve_interval(problem_w, y_w, constraints, alpha, radius_mode=ONE_AT_A_TIME,
                   certify=True):
    """Confidence interval for h'x on the whitened problem (full n-variate path)."""
    K = problem_w.K_w
    s_sq, x_feas, x_int, slack_stats = _slack_full(K, y_w, constraints)
    radius_sq = _radius_for(radius_mode, alpha, s_sq, problem_w.n)
    result = solve_interval_at_radius(
        problem_w, y_w, constraints, radius_sq,
        slack=(s_sq, x_feas, x_int), certify=certify,
    )
    result.solver_stats["slack"] = slack_stats
    result.mode = radius_mode
    return result


@dataclass(frozen=True)
class _ReducedView:
    """Duck-typed stand-in for a WhitenedProblem over the reduced operator."""

    K_w: np.ndarray
    h: np.ndarray

    @property
    def n(self):
        return self.K_w.shape[0]

    @property
    def p(self):
        return self.K_w.shape[1]


def _lift_certificate(cert, red, radius_red):
    """Map a reduced-space certificate to the full whitened problem."""
    w_red = cert.w
    norm = np.linalg.norm(w_red)
    if radius_red <= 0 or norm == 0.0:
        kappa = 0.0
    else:
        kappa = norm / np.sqrt(radius_red)
    if cert.endpoint == "upper":
        kappa = -kappa
    w_full = red.u_top @ w_red + kappa * red.y_tail_vec
    return w_full


def solve_interval_reduced(problem_w, y_w, constraints, alpha,
                           radius_mode=ONE_AT_A_TIME, certify=True,
                           reduction=None):
    """Same contract as :func:`solve_interval`, via the p-variate reduction."""
    red = reduction if reduction is not None else svd_reduce(problem_w, y_w)
    view = _ReducedView(K_w=red.operator, h=problem_w.h)
    s_red, x_feas, x_int, slack_stats = _slack_full(red.operator, red.y_top,
                                                    constraints)
    s_sq = s_red + red.tail_sq
    radius_sq = _radius_for(radius_mode, alpha, s_sq, problem_w.n)
    radius_red = radius_sq - red.tail_sq
    if radius_red <= s_red + 1e-10 * (1.0 + s_red):
        raise EmptyConfidenceSet(
            f"radius {radius_sq:.6g} does not exceed the minimum constrained "
            f"residual {s_sq:.6g}"
        )
    result = solve_interval_at_radius(
        view, red.y_top, constraints, radius_red,
        slack=(s_red, x_feas, x_int), certify=False,
    )
    # report in full-problem units and lift the certificates
    result.slack_sq = s_sq
    result.radius_sq = radius_sq
    result.mode = radius_mode
    result.solver_stats["slack"] = slack_stats
    result.solver_stats["reduced"] = True
    result.solver_stats["tail_sq"] = red.tail_sq
    for name, primal in (("dual_lower", result.lower), ("dual_upper", result.upper)):
        cert_red = getattr(result, name)
        w_full = _lift_certificate(cert_red, red, radius_red)
        obj = dual_objective(y_w, radius_sq, constraints, w_full, cert_red.c,
                             cert_red.endpoint)
        lifted = DualCertificate(
            w=w_full, c=cert_red.c, objective=obj, gap=abs(primal - obj),
            endpoint=cert_red.endpoint,
        )
        setattr(result, name, lifted)
    if certify:
        ok = True
        for cert, primal in ((result.dual_lower, result.lower),
                             (result.dual_upper, result.upper)):
            chk = verify_certificate(problem_w.K_w, y_w, problem_w.h,
                                     constraints, radius_sq, cert, primal)
            ok = ok and chk["ok"]
        result.solver_stats["certified"] = ok
    return result


def dual_solve(problem_w, y_w, constraints, radius_sq, endpoint):
    """Dual certificate for one endpoint at an explicit radius.

    Raises CertificateUnavailable when the extracted certificate fails its
    verification tolerance.
    """
    if radius_sq <= 0:
        raise ValueError("radius_sq must be positive")
    if endpoint not in ("lower", "upper"):
        raise ValueError("endpoint must be 'lower' or 'upper'")
    K, h = problem_w.K_w, problem_w.h
    s_sq, x_feas, x_int, _ = _slack_full(K, y_w, constraints)
    if radius_sq <= s_sq + 1e-10 * (1.0 + s_sq):
        raise EmptyConfidenceSet("radius does not exceed the minimum residual")
    check_functional_bounded(K, h, constraints)
    theta, _, cert, _ = _endpoint_solve(K, y_w, h, radius_sq, constraints,
                                        x_feas, endpoint)
    chk = verify_certificate(K, y_w, h, constraints, radius_sq, cert, theta)
    if not chk["ok"]:
        raise CertificateUnavailable(
            f"certificate failed verification: stationarity "
            f"{chk['stationarity']:.2e}, gap {chk['gap']}"
        )
    return cert


def closed_form_fullrank(problem_w, y_w, alpha, rank_tol=DEFAULT_RANK_TOL):
    """Unconstrained full-rank interval in closed form (least-squares oracle)."""
    K, h = problem_w.K_w, problem_w.h
    n, p = K.shape
    s = np.linalg.svd(K, compute_uv=False)
    if s.size == 0 or s[0] == 0.0 or np.count_nonzero(s > rank_tol * s[0]) < p:
        raise RankDeficient("closed form requires rank(K_w) = p")
    z = z_value(alpha)
    KtK = K.T @ K
    cf = scipy.linalg.cho_factor(KtK)
    x_ls = scipy.linalg.cho_solve(cf, K.T @ y_w)
    u = scipy.linalg.cho_solve(cf, h)
    se = float(np.sqrt(h @ u))
    theta_ls = float(h @ x_ls)
    resid = y_w - K @ x_ls
    s_sq = float(resid @ resid)
    radius_sq = z ** 2 + s_sq
    shift = (z / se) * u
    x_lo = x_ls - shift
    x_hi = x_ls + shift
    cs = ConstraintSet(p)
    certs = {}
    for endpoint, x_opt, primal in (("lower", x_lo, theta_ls - z * se),
                                    ("upper", x_hi, theta_ls + z * se)):
        lam = se / (2.0 * z)
        r = y_w - K @ x_opt
        w = 2.0 * lam * r if endpoint == "lower" else -2.0 * lam * r
        obj = dual_objective(y_w, radius_sq, cs, w, np.zeros(0), endpoint)
        certs[endpoint] = DualCertificate(
            w=w, c=np.zeros(0), objective=obj, gap=abs(primal - obj),
            endpoint=endpoint,
        )
    return IntervalResult(
        lower=theta_ls - z * se,
        upper=theta_ls + z * se,
        slack_sq=s_sq,
        radius_sq=radius_sq,
        x_at_lower=x_lo,
        x_at_upper=x_hi,
        dual_lower=certs["lower"],
        dual_upper=certs["upper"],
        solver_stats={"closed_form": True},
        method="closed_form",
    )
