"""Conditional-independence test kernel for a binary target.

Everything here is built around a Newton-fitted binary logistic regression:
the likelihood-ratio test compares nested fits and refers the deviance to a
chi-square tail, the univariate score test shortcuts the first selection step
without fitting anything, and ``chisq_log_sf`` returns chi-square survival
probabilities directly in log space so that p-values far below the machine
epsilon stay ordered.

All functions are pure; there is no shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

__all__ = [
    "FitOptions",
    "LogisticFit",
    "TestResult",
    "fit_logistic",
    "lrt",
    "lrt_sweep",
    "score_test_univariate",
    "chisq_log_sf",
]


@dataclass(frozen=True)
class FitOptions:
    """Knobs for the Newton solver.

    ``beta_cap`` bounds every coefficient after the line search so that
    separable inputs saturate instead of overflowing; the log-likelihood
    plateaus there and test statistics stay finite.
    """

    max_iter: int = 50
    grad_tol: float = 1e-6
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    beta_cap: float = 30.0


_DEFAULT_OPTS = FitOptions()

# Fallback chain labels, ordered weakest-first so we can report the worst
# method any iteration had to resort to.
_METHOD_NEWTON = "newton"
_METHOD_CG = "conjugate-fixed-hessian"
_METHOD_GRAD = "gradient-descent"
_METHOD_RANK = {_METHOD_NEWTON: 0, _METHOD_CG: 1, _METHOD_GRAD: 2}


@dataclass
class LogisticFit:
    """Result of a logistic maximum-likelihood fit.

    ``beta`` holds the intercept first. ``ll_trace`` records the
    log-likelihood after every accepted update (starting value included);
    the Armijo line search guarantees it is non-decreasing.
    """

    beta: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    method_used: str
    ll_trace: list = field(default_factory=list)


@dataclass
class TestResult:
    """Outcome of one conditional-independence test.

    ``log_p`` is the natural log of the p-value (always <= 0).
    ``log_likelihood_full`` is the log-likelihood of the model including the
    candidate (NaN for the score test, which fits no model).
    ``uninformative`` marks degenerate inputs (single-class slice, constant
    candidate) that carry no evidence; such results use log_p = 0.
    ``beta_full`` is the coefficient vector of the full model when one was
    fitted, kept so callers can reuse the local model.
    """

    log_p: float
    statistic: float
    df: int
    log_likelihood_full: float
    uninformative: bool = False
    beta_full: np.ndarray | None = None


def _log_likelihood(y, eta):
    # sum(y*eta - log(1 + exp(eta))), stable for large |eta|
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def _cg_solve(hess, grad):
    """Linear conjugate-gradient solve of H d = g.

    Returns an ascent direction (g.d > 0) or None if the iteration breaks
    down (non-finite values, non-positive curvature from the start).
    """
    n = grad.shape[0]
    x = np.zeros(n)
    r = grad.copy()
    p = r.copy()
    rs = float(r @ r)
    if rs == 0.0:
        return None
    for _ in range(2 * n + 5):
        hp = hess @ p
        denom = float(p @ hp)
        if not np.isfinite(denom) or denom <= 0.0:
            break
        alpha = rs / denom
        x = x + alpha * p
        r = r - alpha * hp
        rs_new = float(r @ r)
        if not np.isfinite(rs_new):
            break
        if math.sqrt(rs_new) < 1e-12 * (1.0 + math.sqrt(rs)):
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    if not np.all(np.isfinite(x)):
        return None
    if float(grad @ x) <= 0.0:
        return None
    return x


def fit_logistic(X, y, opts=None, beta_init=None):
    """Maximum-likelihood logistic fit of ``y`` on ``X`` plus an intercept.

    ``X`` may have zero columns (intercept-only model). Newton steps are
    tried first; if the Hessian factorization fails the direction falls back
    to a conjugate-gradient solve against the same Hessian and, as a last
    resort, to the raw gradient. Every direction passes a backtracking
    Armijo line search, so the log-likelihood never decreases.

    Non-convergence is not an error: the best iterate is returned with
    ``converged=False``.
    """
    opts = opts or _DEFAULT_OPTS
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.shape[0]
    if X.size and X.shape[0] != n:
        raise ValueError(
            f"X has {X.shape[0]} rows but y has {n} entries"
        )
    if X.size == 0:
        X = X.reshape(n, 0)
    xa = np.hstack([np.ones((n, 1)), X])
    k = xa.shape[1]

    beta = np.zeros(k)
    if beta_init is not None:
        beta_init = np.asarray(beta_init, dtype=np.float64).ravel()
        if beta_init.shape[0] != k:
            raise ValueError("beta_init length does not match predictor count")
        beta = beta_init.copy()

    eta = xa @ beta
    ll = _log_likelihood(y, eta)
    trace = [ll]
    method = _METHOD_NEWTON
    converged = False
    iterations = 0

    for _ in range(opts.max_iter):
        p = expit(eta)
        grad = xa.T @ (y - p)
        if float(np.max(np.abs(grad))) < opts.grad_tol:
            converged = True
            break

        w = p * (1.0 - p)
        hess = xa.T @ (xa * w[:, None])
        direction = None
        try:
            factor = cho_factor(hess, check_finite=False)
            cand = cho_solve(factor, grad, check_finite=False)
            if np.all(np.isfinite(cand)) and float(grad @ cand) > 0.0:
                direction = cand
        except (LinAlgError, ValueError):
            direction = None
        if direction is None:
            direction = _cg_solve(hess, grad)
            if direction is not None:
                method = _max_method(method, _METHOD_CG)
        if direction is None:
            direction = grad
            method = _max_method(method, _METHOD_GRAD)

        gd = float(grad @ direction)
        xad = xa @ direction
        step = 1.0
        accepted = False
        while step > 1e-12:
            eta_trial = eta + step * xad
            ll_trial = _log_likelihood(y, eta_trial)
            if ll_trial >= ll + opts.armijo_c1 * step * gd:
                accepted = True
                break
            step *= opts.backtrack
        if not accepted:
            break

        raw = beta + step * direction
        beta_new = np.clip(raw, -opts.beta_cap, opts.beta_cap)
        if np.array_equal(beta_new, raw):
            eta_new, ll_new = eta_trial, ll_trial
        else:
            eta_new = xa @ beta_new
            ll_new = _log_likelihood(y, eta_new)
            if ll_new < ll:
                # the cap moved us off the line-search point; keep the old iterate
                break
        beta, eta, ll = beta_new, eta_new, ll_new
        iterations += 1
        trace.append(ll)

    return LogisticFit(
        beta=beta,
        log_likelihood=ll,
        iterations=iterations,
        converged=converged,
        method_used=method,
        ll_trace=trace,
    )


def _max_method(current, candidate):
    if _METHOD_RANK[candidate] > _METHOD_RANK[current]:
        return candidate
    return current


def _uninformative(ll_full=0.0):
    return TestResult(
        log_p=0.0,
        statistic=0.0,
        df=1,
        log_likelihood_full=ll_full,
        uninformative=True,
    )


def lrt(y, candidate, conditioning=None, opts=None, null_fit=None):
    """Likelihood-ratio test of the candidate feature given a conditioning set.

    Fits the null model on the conditioning columns and the full model on
    conditioning plus candidate, warm-starting the latter from the null fit
    so the deviance 2*(LL1 - LL0) is non-negative by construction (clamped
    at zero for round-off). One degree of freedom (continuous candidate).

    A slice whose target has a single class is uninformative: log_p = 0.
    ``null_fit`` lets callers share the null model across candidates tested
    against the same conditioning set.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    candidate = np.asarray(candidate, dtype=np.float64).ravel()
    n = y.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    if candidate.shape[0] != n:
        raise ValueError("candidate length does not match target length")
    if conditioning is None:
        cond = np.empty((n, 0))
    else:
        cond = np.asarray(conditioning, dtype=np.float64)
        if cond.ndim == 1:
            cond = cond[:, None]
        if cond.shape[0] != n:
            raise ValueError("conditioning rows do not match target length")

    if y.min() == y.max():
        return _uninformative()

    fit0 = null_fit if null_fit is not None else fit_logistic(cond, y, opts)
    full_x = np.hstack([cond, candidate[:, None]])
    init = np.append(fit0.beta, 0.0)
    fit1 = fit_logistic(full_x, y, opts, beta_init=init)

    statistic = 2.0 * (fit1.log_likelihood - fit0.log_likelihood)
    statistic = max(statistic, 0.0)
    return TestResult(
        log_p=chisq_log_sf(statistic, 1),
        statistic=statistic,
        df=1,
        log_likelihood_full=fit1.log_likelihood,
        beta_full=fit1.beta,
    )


def lrt_sweep(y, candidates, conditioning=None, opts=None, null_fit=None):
    """Likelihood-ratio tests of many candidates against one conditioning set.

    Newton iterations run for all candidates at once: the shared-column
    Hessian blocks collapse into dense matrix products over the candidate
    axis, so the whole sweep costs a few large BLAS calls instead of one
    model fit per candidate. Every candidate is warm-started from the null
    fit, full steps are taken without a line search, and any candidate that
    misbehaves (singular system, non-finite values, shrinking likelihood,
    coefficients at the cap, no convergence) is refit with the robust
    scalar path, so results agree with ``lrt`` up to optimizer tolerance.

    Returns a list of TestResult, one per candidate column.
    """
    opts = opts or _DEFAULT_OPTS
    y = np.asarray(y, dtype=np.float64).ravel()
    cands = np.asarray(candidates, dtype=np.float64)
    if cands.ndim == 1:
        cands = cands[:, None]
    n, m = cands.shape
    if y.shape[0] != n:
        raise ValueError("candidate rows do not match target length")
    if conditioning is None:
        cond = np.empty((n, 0))
    else:
        cond = np.asarray(conditioning, dtype=np.float64)
        if cond.ndim == 1:
            cond = cond[:, None]
        if cond.shape[0] != n:
            raise ValueError("conditioning rows do not match target length")
    if m == 0:
        return []
    if y.min() == y.max():
        return [_uninformative() for _ in range(m)]

    fit0 = null_fit if null_fit is not None else fit_logistic(cond, y, opts)
    ll0 = fit0.log_likelihood
    base = np.hstack([np.ones((n, 1)), cond])
    d0 = base.shape[1]
    pair_i, pair_j = np.triu_indices(d0)
    base_pairs = base[:, pair_i] * base[:, pair_j]  # (n, d0*(d0+1)/2)

    beta = np.tile(np.append(fit0.beta, 0.0)[:, None], (1, m))  # (d0+1, m)
    active = np.arange(m)
    needs_fallback = np.zeros(m, dtype=bool)
    x_act = cands           # shrinks with the active set
    b_act = beta.copy()
    d = d0 + 1

    # Full Newton steps, no line search: the log-likelihood is concave, so a
    # gradient-converged column sits at its global optimum; columns that hit
    # the coefficient cap, go non-finite, or never converge are refit with
    # the safeguarded scalar path.
    for _ in range(opts.max_iter):
        if active.size == 0:
            break
        eta = x_act * b_act[d0]
        eta += base @ b_act[:d0]
        p = expit(eta, out=eta)                        # eta not needed past here
        resid = y[:, None] - p
        g_shared = base.T @ resid                      # (d0, a)
        g_cand = np.einsum("nj,nj->j", x_act, resid)   # (a,)
        gmax = np.maximum(np.abs(g_shared).max(axis=0), np.abs(g_cand))
        done = np.isfinite(gmax) & (gmax < opts.grad_tol)
        if done.any():
            beta[:, active[done]] = b_act[:, done]
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            x_act = x_act[:, keep]
            b_act = b_act[:, keep]
            p = p[:, keep]
            g_shared = g_shared[:, keep]
            g_cand = g_cand[keep]
        w = np.subtract(1.0, p)
        np.multiply(p, w, out=w)
        wx = np.multiply(w, x_act)
        a = active.size
        hess = np.empty((a, d, d))
        ha = base_pairs.T @ w                          # (pairs, a)
        hess[:, pair_i, pair_j] = ha.T
        hess[:, pair_j, pair_i] = ha.T
        hb = base.T @ wx                               # (d0, a)
        hess[:, :d0, d0] = hb.T
        hess[:, d0, :d0] = hb.T
        hess[:, d0, d0] = np.einsum("nj,nj->j", wx, x_act)
        grad = np.vstack([g_shared, g_cand[None, :]])  # (d, a)
        try:
            step = np.linalg.solve(hess, grad.T[:, :, None])[:, :, 0]  # (a, d)
        except np.linalg.LinAlgError:
            needs_fallback[active] = True
            active = active[:0]
            break
        b_act = b_act + step.T
        bad = (
            ~np.isfinite(b_act).all(axis=0)
            | (np.abs(b_act) > opts.beta_cap).any(axis=0)
        )
        if bad.any():
            needs_fallback[active[bad]] = True
            keep = ~bad
            active = active[keep]
            x_act = x_act[:, keep]
            b_act = b_act[:, keep]
    if active.size:
        needs_fallback[active] = True  # ran out of iterations

    good = ~needs_fallback
    ll = np.full(m, -np.inf)
    if good.any():
        eta_fin = base @ beta[:d0, good] + cands[:, good] * beta[d0, good]
        ll[good] = eta_fin.T @ y - np.logaddexp(0.0, eta_fin).sum(axis=0)

    results = []
    for j in range(m):
        if needs_fallback[j]:
            results.append(lrt(y, cands[:, j], cond, opts, null_fit=fit0))
            continue
        statistic = max(0.0, 2.0 * (ll[j] - ll0))
        results.append(TestResult(
            log_p=chisq_log_sf(statistic, 1),
            statistic=statistic,
            df=1,
            log_likelihood_full=float(ll[j]),
            beta_full=beta[:, j].copy(),
        ))
    return results


def score_test_univariate(x, y):
    """Score (Lagrange multiplier) test of a single feature, no model fit.

    The signed statistic is
    ``sum(x * (y - ybar)) / sqrt(ybar * (1 - ybar) * sum((x - xbar)^2))``;
    its square is referred to chi-square with one degree of freedom. A
    constant feature or single-class target yields an uninformative result.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y lengths differ")
    ybar = y.mean()
    ss_x = float(np.sum((x - x.mean()) ** 2))
    denom_sq = ybar * (1.0 - ybar) * ss_x
    if denom_sq <= 0.0:
        return TestResult(
            log_p=0.0,
            statistic=0.0,
            df=1,
            log_likelihood_full=float("nan"),
            uninformative=True,
        )
    signed = float(x @ (y - ybar)) / math.sqrt(denom_sq)
    statistic = signed * signed
    return TestResult(
        log_p=chisq_log_sf(statistic, 1),
        statistic=statistic,
        df=1,
        log_likelihood_full=float("nan"),
    )


# --- chi-square log survival -------------------------------------------------
#
# ln SF(x; df) = ln Q(df/2, x/2) with Q the regularized upper incomplete
# gamma function. The head (z < a + 1) uses the lower-gamma series and
# log1p, the tail uses the Lentz continued fraction evaluated in log space,
# so the result stays accurate down to values like -5e5 where linear-space
# survival probabilities underflow to zero.

_GAMMA_EPS = 3e-16
_GAMMA_FPMIN = 1e-300
_GAMMA_ITMAX = 10000


def _lower_gamma_series(a, z):
    """Regularized lower incomplete gamma P(a, z) for z < a + 1."""
    ap = a
    total = 1.0 / a
    delt = total
    for _ in range(_GAMMA_ITMAX):
        ap += 1.0
        delt *= z / ap
        total += delt
        if abs(delt) < abs(total) * _GAMMA_EPS:
            break
    else:
        raise RuntimeError("incomplete gamma series did not converge")
    return total * math.exp(-z + a * math.log(z) - math.lgamma(a))


def _log_upper_gamma_cf(a, z):
    """ln of regularized upper incomplete gamma Q(a, z) for z >= a + 1."""
    b = z + 1.0 - a
    c = 1.0 / _GAMMA_FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_ITMAX + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _GAMMA_FPMIN:
            d = _GAMMA_FPMIN
        c = b + an / c
        if abs(c) < _GAMMA_FPMIN:
            c = _GAMMA_FPMIN
        d = 1.0 / d
        delt = d * c
        h *= delt
        if abs(delt - 1.0) < _GAMMA_EPS:
            break
    else:
        raise RuntimeError("incomplete gamma continued fraction did not converge")
    return -z + a * math.log(z) - math.lgamma(a) + math.log(h)


def chisq_log_sf(x, df):
    """Natural log of the chi-square survival function, never -inf.

    Accurate in a relative sense for the log itself, for arguments at least
    up to 1e6 and any df >= 1 (the combined statistics seen here reach the
    thousands, far past where 1 - cdf underflows).
    """
    if df < 1:
        raise ValueError("df must be >= 1")
    x = float(x)
    if not math.isfinite(x) or x < 0.0:
        raise ValueError("statistic must be finite and non-negative")
    if x == 0.0:
        return 0.0
    a = 0.5 * df
    z = 0.5 * x
    if z < a + 1.0:
        return min(0.0, math.log1p(-_lower_gamma_series(a, z)))
    return min(0.0, _log_upper_gamma_cf(a, z))
