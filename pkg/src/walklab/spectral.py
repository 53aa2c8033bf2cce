"""Spectral radius of the walk: lower bounds, ratio extrapolation, exact oracles.

The return sequence a_n = mu^(n)(e) is supermultiplicative, so the roots
a_n^{1/n} are certified lower bounds that increase to the spectral radius.
Ratio sequences a_{n+1}/a_n converge to it at rate 1/n when a_n carries a
polynomial prefactor; a one-term 1/n fit removes that bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, InsufficientDataError, WalklabError
from .groups import DEFAULT_CAP, GroupSpec, identity, inverter
from .measures import SparseMeasure, SupportStepper, power, power_trace


@dataclass(frozen=True)
class SpectralEstimate:
    rho_hat: float
    method: str                  # root_test | ratio_extrapolated | laplace_exact | stochastic_exact
    lower_bounds: tuple          # ((n, a_n^{1/n}), ...)
    k0: int | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SupermultReport:
    ok: bool
    pairs_checked: int
    tol: float
    violations: tuple = ()


@dataclass(frozen=True)
class GerlReport:
    ok: bool
    k0: int
    n0: int
    r0: int
    n_checked: int
    first_violation: tuple | None = None


# ---------------------------------------------------------------------------
# return sequence, with the radial fast path on free groups
# ---------------------------------------------------------------------------

def _isotropic_nearest_neighbor(m: SparseMeasure):
    """(lazy_mass, step_mass, k) when the support is {e} plus all 2k single
    letters with one common weight; None otherwise."""
    spec = m.spec
    if spec.kind != "free_group":
        return None
    k = spec.rank
    e = ()
    lazy = m.weights.get(e, Fraction(0) if m.exact else 0.0)
    letters = {x for x in m.weights if x != e}
    expected = {(v,) for v in range(1, k + 1)} | {(-v,) for v in range(1, k + 1)}
    if letters != expected:
        return None
    ws = {m.weights[x] for x in letters}
    if len(ws) != 1:
        return None
    w = next(iter(ws))
    return lazy, 2 * k * w, k


def _radial_vectors(lazy, step, k, n_max: int, exact: bool) -> list:
    """Distance-from-origin distributions after 1..n_max steps.

    The word-length projection of an isotropic nearest-neighbor walk on the
    free group is a birth-death chain: from distance r >= 1 one of the 2k
    letters cancels, the other 2k-1 extend.
    """
    two_k = 2 * k
    if exact:
        toward = Fraction(step, two_k) if not isinstance(step, Fraction) else step / two_k
        away = step - toward
        v = [Fraction(0)] * (n_max + 2)
        v[0] = Fraction(1)
        out = []
        for _ in range(n_max):
            new = [Fraction(0)] * (n_max + 2)
            new[0] = lazy * v[0] + toward * v[1]
            new[1] = step * v[0] + lazy * v[1] + toward * v[2]
            for r in range(2, n_max + 1):
                new[r] = away * v[r - 1] + lazy * v[r] + toward * v[r + 1]
            v = new
            out.append(list(v[: n_max + 1]))
        return out
    toward = float(step) / two_k
    away = float(step) - toward
    lazy = float(lazy)
    v = np.zeros(n_max + 2)
    v[0] = 1.0
    out = []
    for _ in range(n_max):
        new = np.zeros(n_max + 2)
        new[0] = lazy * v[0] + toward * v[1]
        new[1] = float(step) * v[0] + lazy * v[1] + toward * v[2]
        new[2 : n_max + 1] = away * v[1 : n_max] + lazy * v[2 : n_max + 1] + toward * v[3 : n_max + 2]
        v = new
        out.append(v[: n_max + 1].copy())
    return out


def radial_chain_sequence(m: SparseMeasure, n_max: int) -> list:
    """Return sequence via the distance birth-death chain (isotropic
    nearest-neighbor free-group measures only)."""
    iso = _isotropic_nearest_neighbor(m)
    if iso is None:
        raise WalklabError("measure is not isotropic nearest-neighbor on a free group")
    lazy, step, k = iso
    vecs = _radial_vectors(lazy, step, k, n_max, m.exact)
    return [v[0] for v in vecs]


def verify_radial_projection(m: SparseMeasure, n_cross: int = 10, cap: int = DEFAULT_CAP):
    """Max absolute gap between full convolution powers, grouped by word
    length, and the projected chain; exactly zero in rational mode."""
    iso = _isotropic_nearest_neighbor(m)
    if iso is None:
        raise WalklabError("measure is not isotropic nearest-neighbor on a free group")
    lazy, step, k = iso
    vecs = _radial_vectors(lazy, step, k, n_cross, m.exact)
    powers = power(m, n_cross, cap=cap)
    worst = Fraction(0) if m.exact else 0.0
    for n in range(1, n_cross + 1):
        by_dist: dict = {}
        for x, w in powers[n - 1].weights.items():
            by_dist[len(x)] = by_dist.get(len(x), Fraction(0) if m.exact else 0.0) + w
        for r in range(n + 1):
            lhs = by_dist.get(r, Fraction(0) if m.exact else 0.0)
            gap = abs(lhs - vecs[n - 1][r])
            if gap > worst:
                worst = gap
    return worst


def return_sequence(m: SparseMeasure, n_max: int, cap: int = DEFAULT_CAP) -> list:
    """a_n = mu^(n)(e) for n = 1..n_max.

    Isotropic nearest-neighbor free-group measures go through the projected
    distance chain (O(n_max^2)); everything else through convolution powers.
    """
    if _isotropic_nearest_neighbor(m) is not None:
        return radial_chain_sequence(m, n_max)
    trace = power_trace(m, n_max, [identity(m.spec)], cap=cap)
    return trace.at(identity(m.spec))


# ---------------------------------------------------------------------------
# roots, ratios, extrapolation
# ---------------------------------------------------------------------------

def _log_weight(v) -> float:
    if isinstance(v, Fraction):
        return math.log(v.numerator) - math.log(v.denominator)
    return math.log(v)


def root_lower_bounds(a: Sequence) -> list[tuple[int, float]]:
    """(n, a_n^{1/n}) for every positive a_n; each value is a certified lower
    bound for the spectral radius."""
    out = [(n, math.exp(_log_weight(v) / n)) for n, v in enumerate(a, 1) if v > 0]
    if not out:
        raise InsufficientDataError("all sequence values are zero")
    return out


def fit_ratio_limit(ns: Sequence[int], ratios: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares fit r_n = L + B/n; returns (L, B, rms residual)."""
    x = 1.0 / np.asarray(ns, dtype=np.float64)
    y = np.asarray(ratios, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    return float(intercept), float(slope), float(np.sqrt(np.mean(resid**2)))


def rho_estimate(a: Sequence, mode: str = "ratio_extrapolated") -> SpectralEstimate:
    """Estimate the spectral radius from a return sequence.

    Period-d sequences (positive only on multiples of d) are handled with
    stride-d ratios converging to rho^d, rooted at the end.
    """
    bounds = root_lower_bounds(a)
    if mode == "root_test":
        rho = max(v for _, v in bounds)
        return SpectralEstimate(rho, "root_test", tuple(bounds), diagnostics={"n_points": len(bounds)})
    if mode != "ratio_extrapolated":
        raise WalklabError(f"unknown estimation mode {mode!r}")

    positive = [n for n, v in enumerate(a, 1) if v > 0]
    pos_set = set(positive)
    stride = math.gcd(*positive)
    usable = [n for n in positive if n + stride in pos_set]
    if len(usable) < 8:
        raise InsufficientDataError(f"only {len(usable)} usable ratio points (need 8)")
    ratios = {n: math.exp(_log_weight(a[n + stride - 1]) - _log_weight(a[n - 1])) for n in usable}
    tail = usable[-max(8, len(usable) // 4):]
    limit_s, slope, rms = fit_ratio_limit(tail, [ratios[n] for n in tail])
    rho = limit_s ** (1.0 / stride)
    raw = ratios[usable[-1]] ** (1.0 / stride)
    return SpectralEstimate(
        rho,
        "ratio_extrapolated",
        tuple(bounds),
        diagnostics={
            "raw_last_ratio": raw,
            "correction_coeff": slope / limit_s if limit_s else float("nan"),
            "fit_residual_rms": rms,
            "n_points": len(tail),
            "stride": stride,
        },
    )


# ---------------------------------------------------------------------------
# exact oracle on integer lattices: minimize the Laplace transform
# ---------------------------------------------------------------------------

def laplace_transform(m: SparseMeasure, c: Sequence[float]) -> float:
    if m.spec.kind != "free_abelian":
        raise WalklabError("laplace_transform requires the free_abelian backend")
    c = np.asarray(c, dtype=np.float64)
    items = m.sorted_items()
    x = np.array([e for e, _ in items], dtype=np.float64)
    w = np.array([float(v) for _, v in items])
    return float(np.sum(w * np.exp(x @ c)))


def laplace_argmin(
    m: SparseMeasure, tol: float = 1e-12, max_sweeps: int = 200
) -> tuple[float, np.ndarray]:
    """Minimize sum_x mu(x) exp(<c, x>) by coordinate-wise Newton with
    backtracking; the minimum is the spectral radius on the lattice."""
    if m.spec.kind != "free_abelian":
        raise WalklabError("laplace_argmin requires the free_abelian backend")
    items = m.sorted_items()
    x = np.array([e for e, _ in items], dtype=np.float64)
    w = np.array([float(v) for _, v in items])
    d = m.spec.rank
    c = np.zeros(d)

    def value(cv):
        return float(np.sum(w * np.exp(x @ cv)))

    f = value(c)
    for _ in range(max_sweeps):
        terms = w * np.exp(x @ c)
        grad = x.T @ terms
        if np.linalg.norm(grad) <= tol:
            return f, c
        for i in range(d):
            xi = x[:, i]
            if not np.any(xi):
                continue
            terms = w * np.exp(x @ c)
            g = float(xi @ terms)
            h = float((xi * xi) @ terms)
            if h == 0.0:
                continue
            step = -g / h
            t = 1.0
            while t > 1e-18:
                trial = c.copy()
                trial[i] += t * step
                ft = value(trial)
                if ft <= f + 1e-4 * t * g * step:
                    c = trial
                    f = ft
                    break
                t *= 0.5
    terms = w * np.exp(x @ c)
    grad = x.T @ terms
    if np.linalg.norm(grad) <= tol:
        return f, c
    raise ConvergenceError(
        f"Laplace minimization stalled with |grad| = {np.linalg.norm(grad):.3e}; "
        "the transform may be unbounded below (support on one side of a hyperplane)"
    )


def laplace_min(m: SparseMeasure) -> float:
    """Exact spectral radius on the lattice (minimum of the Laplace transform)."""
    rho, _ = laplace_argmin(m)
    return rho


# ---------------------------------------------------------------------------
# structural checks on the return sequence
# ---------------------------------------------------------------------------

def check_supermultiplicativity(a: Sequence, tol: float = 1e-9) -> SupermultReport:
    """a_m a_n <= a_{m+n}, allowing (1+tol) slack in float mode."""
    n_total = len(a)
    exact = any(isinstance(v, Fraction) for v in a)
    violations = []
    pairs = 0
    if exact:
        for i in range(1, n_total + 1):
            for j in range(i, n_total - i + 1):
                pairs += 1
                if a[i - 1] * a[j - 1] > a[i + j - 1]:
                    violations.append((i, j, float(a[i - 1] * a[j - 1]), float(a[i + j - 1])))
    else:
        arr = np.asarray(a, dtype=np.float64)
        for i in range(1, n_total + 1):
            rhs = arr[i : n_total] * (1.0 + tol)
            lhs = arr[i - 1] * arr[: n_total - i]
            bad = np.flatnonzero(lhs > rhs)
            pairs += len(rhs)
            for j in bad[:10]:
                violations.append((i, int(j) + 1, float(lhs[j]), float(arr[i + j])))
    return SupermultReport(not violations, pairs, tol, tuple(violations[:10]))


def check_gerl_strict(
    m: SparseMeasure, rho_exact: float, n_max: int, cap: int = DEFAULT_CAP
) -> GerlReport:
    """Strict inequality a_n < rho^n for all n >= k0 = n0 + r0.

    n0 is the positivity threshold of a_n, x0 any non-identity support point,
    and r0 the first power of the support containing x0^{-1}.  Requires an
    aperiodic walk and a certified rho.
    """
    e = identity(m.spec)
    non_lazy = sorted(m.support - {e})
    if not non_lazy:
        raise WalklabError("support is {e}: the strictness check is vacuous")
    if not rho_exact > 0:
        raise WalklabError("a certified positive rho is required")
    a = return_sequence(m, n_max, cap=cap)
    positive = [n for n, v in enumerate(a, 1) if v > 0]
    if not positive:
        raise WalklabError("walk never returns within the horizon")
    if math.gcd(*positive) != 1:
        raise WalklabError("strictness check requires an aperiodic walk")
    zeros = [n for n, v in enumerate(a, 1) if v == 0]
    n0 = (zeros[-1] + 1) if zeros else 1

    x0 = non_lazy[0]
    x0_inv = inverter(m.spec)(x0)
    stepper = SupportStepper(m.spec, m.support, max_steps=n_max, cap=cap)
    r0 = None
    for r in range(1, n_max + 1):
        if r > 1:
            stepper.step()
        if stepper.contains(x0_inv):
            r0 = r
            break
    if r0 is None:
        raise WalklabError(f"x0^-1 not reached by support powers within {n_max} steps")

    k0 = n0 + r0
    first_violation = None
    for n in range(k0, n_max + 1):
        if not float(a[n - 1]) < rho_exact**n:
            first_violation = (n, float(a[n - 1]), rho_exact**n)
            break
    return GerlReport(first_violation is None, k0, n0, r0, n_max - k0 + 1, first_violation)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def estimate_spectral(
    m: SparseMeasure, n_max: int, method: str = "auto", cap: int = DEFAULT_CAP
) -> SpectralEstimate:
    """Return-sequence based estimate with the best available rho.

    ``auto`` picks the exact oracle where one exists: the Laplace minimum on
    lattices, rho = 1 for finite-backend probability measures; otherwise the
    extrapolated ratio estimate.
    """
    a = return_sequence(m, n_max, cap=cap)
    if method == "auto":
        if m.spec.kind == "free_abelian" and m.is_probability:
            method = "laplace_exact"
        elif m.spec.is_finite and m.is_probability:
            method = "stochastic_exact"
        else:
            method = "ratio_extrapolated"
    if method in ("root_test", "ratio_extrapolated"):
        return rho_estimate(a, mode=method)
    bounds = root_lower_bounds(a)
    diagnostics: dict = {"n_points": len(bounds)}
    try:
        ratio_est = rho_estimate(a)
        diagnostics["ratio_extrapolated"] = ratio_est.rho_hat
        diagnostics.update({k: v for k, v in ratio_est.diagnostics.items() if k != "n_points"})
    except InsufficientDataError:
        pass
    if method == "laplace_exact":
        rho = laplace_min(m)
    elif method == "stochastic_exact":
        if not (m.spec.is_finite and m.is_probability):
            raise WalklabError("stochastic_exact requires a finite-backend probability measure")
        rho = 1.0
    else:
        raise WalklabError(f"unknown method {method!r}")
    return SpectralEstimate(rho, method, tuple(bounds), diagnostics=diagnostics)
