"""Ratio limits, limit measures, the conditioned (h-) process, and the
Bernoulli tail estimate that powers the ratio limit argument.

Conventions: convolution acts on the left, (mu * nu)(z) = sum_x mu(x) nu(x^{-1}z),
and a rho-harmonic function satisfies sum_y mu(x^{-1}y) h(y) = rho h(x).
The two are linked by h(x) = nu(x^{-1}); ``reverse_values`` bridges them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import InsufficientDataError, WalklabError
from .groups import DEFAULT_CAP, Elem, GroupSpec, identity, inverter, multiplier
from .measures import SparseMeasure, power_trace
from .spectral import fit_ratio_limit, laplace_argmin

HARMONIC_TOL = 1e-9


# ---------------------------------------------------------------------------
# ratio series and limit measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatioReport:
    x: Elem
    stride: int
    ratios: tuple                # ((n, mu^(n+stride)(x) / mu^(n)(x)), ...)
    extrapolated_limit: float
    diagnostics: dict = field(default_factory=dict)
    nu_n: tuple = ()             # ((n, {elem: mu^(n)(elem)/mu^(n)(e)}), ...) when windowed


@dataclass(frozen=True)
class LimitMeasureEstimate:
    values: dict                 # elem -> tail-averaged mu^(n)(x)/mu^(n)(e)
    n_used: tuple
    n_max: int


def _positive_indices(vals: Sequence) -> list[int]:
    return [n for n, v in enumerate(vals, 1) if v > 0]


def ratio_series(
    m: SparseMeasure,
    x: Elem,
    n_max: int,
    window: Iterable[Elem] | None = None,
    cap: int = DEFAULT_CAP,
) -> RatioReport:
    """Consecutive-power ratios of mu^(n)(x) and their extrapolated limit.

    Periodic walks are reported through stride-d ratios (the gcd of gaps
    between the steps that reach x), which converge to rho^d.
    """
    e = identity(m.spec)
    targets = [x, e] + (sorted(set(window)) if window else [])
    trace = power_trace(m.as_float(), n_max, targets, cap=cap)
    vx = trace.at(x)
    pos = _positive_indices(vx)
    if len(pos) < 2:
        raise WalklabError(f"{x!r} reached at fewer than two step counts within {n_max}")
    stride = math.gcd(*[n - pos[0] for n in pos[1:]])
    pos_set = set(pos)
    usable = [n for n in pos if n + stride in pos_set]
    if len(usable) < 8:
        raise InsufficientDataError(f"only {len(usable)} usable ratio points (need 8)")
    ratios = [(n, vx[n + stride - 1] / vx[n - 1]) for n in usable]
    tail = ratios[-max(8, len(ratios) // 4):]
    limit_s, slope, rms = fit_ratio_limit([n for n, _ in tail], [r for _, r in tail])
    limit = limit_s ** (1.0 / stride)

    nu_snapshots = ()
    if window:
        ve = trace.at(e)
        ns = [n for n in _positive_indices(ve) if n >= max(1, int(math.ceil(0.9 * n_max)))]
        nu_snapshots = tuple(
            (n, {w: trace.at(w)[n - 1] / ve[n - 1] for w in sorted(set(window))}) for n in ns
        )
    return RatioReport(
        x,
        stride,
        tuple(ratios),
        limit,
        diagnostics={
            "raw_last_ratio": ratios[-1][1] ** (1.0 / stride),
            "correction_coeff": slope / limit_s if limit_s else float("nan"),
            "fit_residual_rms": rms,
            "n_points": len(tail),
        },
        nu_n=nu_snapshots,
    )


def limit_measure(
    m: SparseMeasure, window: Iterable[Elem], n_max: int, cap: int = DEFAULT_CAP
) -> LimitMeasureEstimate:
    """Tail-averaged normalized powers mu^(n)(x)/mu^(n)(e) over the window.

    Averaging runs over the last 10% of the step counts at which the walk
    returns to e; the value at e is pinned to 1 exactly.
    """
    e = identity(m.spec)
    window = sorted(set(window) | {e})
    trace = power_trace(m.as_float(), n_max, window, cap=cap)
    ve = trace.at(e)
    pos = _positive_indices(ve)
    if not pos:
        raise WalklabError(f"mu^(n)(e) = 0 for all n <= {n_max}")
    cutoff = max(1, int(math.ceil(0.9 * n_max)))
    ns = [n for n in pos if n >= cutoff]
    if not ns:
        ns = pos[-max(1, len(pos) // 10):]
    values = {}
    for x in window:
        vx = trace.at(x)
        values[x] = float(np.mean([vx[n - 1] / ve[n - 1] for n in ns]))
    values[e] = 1.0
    return LimitMeasureEstimate(values, tuple(ns), n_max)


def conv_residual(m: SparseMeasure, nu: Mapping[Elem, object], rho: float, window: Iterable[Elem]) -> float:
    """Sup over the window of |(mu * nu)(z) - rho nu(z)|.

    Every z in the window must have nu valued at z and at x^{-1}z for all
    support points x; otherwise the window is too small.
    """
    invf = inverter(m.spec)
    mult = multiplier(m.spec)
    items = m.sorted_items()
    worst = 0.0
    checked = 0
    for z in sorted(set(window)):
        if z not in nu:
            raise WalklabError(f"window element {z!r} has no nu value")
        total = 0.0
        for x, w in items:
            y = mult(invf(x), z)
            if y not in nu:
                raise WalklabError(
                    f"window too small: nu not valued at {y!r} (= x^-1 z for x={x!r}, z={z!r})"
                )
            total += float(w) * float(nu[y])
        worst = max(worst, abs(total - float(rho) * float(nu[z])))
        checked += 1
    if checked == 0:
        raise WalklabError("empty residual window")
    return worst


def reverse_values(spec: GroupSpec, values: Mapping[Elem, object]) -> dict:
    """Pullback under inversion: out(x) = values(x^{-1})."""
    invf = inverter(spec)
    return {invf(x): v for x, v in values.items()}


# ---------------------------------------------------------------------------
# harmonic functions and the conditioned process
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicFn:
    """Positive function h with sum_y mu(x^{-1}y) h(y) <= rho h(x).

    Either explicit ``values`` on an explored domain, or the closed
    exponential form on a lattice: h(x) = prod_i base2_i^(x_i / 2), stored via
    the squared per-coordinate base so rational bases stay exact.
    """

    spec: GroupSpec
    rho: float
    kind: str                    # "harmonic" | "subharmonic"
    values: dict | None = None
    exp_base2: tuple | None = None

    def __post_init__(self):
        if (self.values is None) == (self.exp_base2 is None):
            raise WalklabError("provide exactly one of values / exp_base2")
        if self.kind not in ("harmonic", "subharmonic"):
            raise WalklabError(f"unknown kind {self.kind!r}")
        if self.values is not None and any(v <= 0 for v in self.values.values()):
            raise WalklabError("harmonic function values must be positive")
        if self.exp_base2 is not None:
            if self.spec.kind != "free_abelian":
                raise WalklabError("exponential form requires the free_abelian backend")
            if len(self.exp_base2) != self.spec.rank or any(b <= 0 for b in self.exp_base2):
                raise WalklabError("exp_base2 must hold one positive base per coordinate")

    @property
    def is_exponential(self) -> bool:
        return self.exp_base2 is not None

    def value(self, x: Elem) -> float:
        if self.is_exponential:
            return math.exp(0.5 * sum(xi * math.log(float(b)) for xi, b in zip(x, self.exp_base2)))
        if x not in self.values:
            raise WalklabError(f"h not valued at {x!r}")
        return float(self.values[x])

    def step_ratio(self, s: Elem) -> float:
        """h(x s) / h(x) for the exponential form (independent of x)."""
        if not self.is_exponential:
            raise WalklabError("step_ratio is only defined for the exponential form")
        return math.exp(0.5 * sum(si * math.log(float(b)) for si, b in zip(s, self.exp_base2)))


def harmonic_from_values(spec: GroupSpec, values: Mapping[Elem, object], rho: float,
                         kind: str = "harmonic") -> HarmonicFn:
    return HarmonicFn(spec, rho, kind, values=dict(values))


def constant_harmonic(spec: GroupSpec, domain: Iterable[Elem], rho: float = 1.0,
                      kind: str = "harmonic") -> HarmonicFn:
    return HarmonicFn(spec, rho, kind, values={x: 1 for x in domain})


def exponential_harmonic(m: SparseMeasure, base2: Sequence, rho: float | None = None,
                         kind: str = "harmonic") -> HarmonicFn:
    """Exponential h from squared bases; rho defaults to the transform value
    at those bases, which makes h exactly harmonic."""
    h0 = HarmonicFn(m.spec, 1.0, kind, exp_base2=tuple(base2))
    if rho is None:
        rho = sum(float(w) * h0.step_ratio(s) for s, w in m.sorted_items())
    return HarmonicFn(m.spec, float(rho), kind, exp_base2=tuple(base2))


def minimal_exponential_harmonic(m: SparseMeasure) -> HarmonicFn:
    """Exponential h at the minimizing tilt; its rho is the lattice spectral radius."""
    rho, c = laplace_argmin(m)
    base2 = tuple(math.exp(2.0 * ci) for ci in c)
    return HarmonicFn(m.spec, rho, "harmonic", exp_base2=base2)


@dataclass(frozen=True)
class HarmonicCheckReport:
    ok: bool
    scope: str                   # "translation_invariant" | "pointwise"
    n_points: int
    n_harmonic: int
    n_strictly_subharmonic: int
    max_violation: float
    detail: str


def harmonic_check(m: SparseMeasure, h: HarmonicFn, tol: float = HARMONIC_TOL) -> HarmonicCheckReport:
    """Per-point slack rho h(x) - sum_s mu(s) h(x s); negative slack beyond
    tolerance disqualifies h."""
    items = m.sorted_items()
    if h.is_exponential:
        lhs = sum(float(w) * h.step_ratio(s) for s, w in items)
        slack = h.rho - lhs
        scale = max(abs(h.rho), 1.0)
        if slack < -tol * scale:
            return HarmonicCheckReport(False, "translation_invariant", 1, 0, 0, -slack,
                                       f"transform value {lhs} exceeds rho {h.rho}")
        is_harmonic = abs(slack) <= tol * scale
        return HarmonicCheckReport(
            True, "translation_invariant", 1,
            1 if is_harmonic else 0, 0 if is_harmonic else 1, 0.0,
            "identical slack at every point (exponential h)",
        )

    mult = multiplier(m.spec)
    dom = h.values.keys()
    n_harmonic = n_strict = n_points = 0
    max_violation = 0.0
    for x in sorted(dom):
        neighbors = [(mult(x, s), w) for s, w in items]
        if any(y not in dom for y, _ in neighbors):
            continue
        n_points += 1
        hx = float(h.values[x])
        lhs = sum(float(w) * float(h.values[y]) for y, w in neighbors)
        slack = h.rho * hx - lhs
        scale = max(h.rho * hx, 1e-300)
        if slack < -tol * scale:
            max_violation = max(max_violation, -slack)
        elif slack <= tol * scale:
            n_harmonic += 1
        else:
            n_strict += 1
    if n_points == 0:
        raise WalklabError("no interior points: every domain point misses neighbor values")
    ok = max_violation == 0.0
    return HarmonicCheckReport(
        ok, "pointwise", n_points, n_harmonic, n_strict, max_violation,
        f"{n_harmonic} harmonic / {n_strict} strictly subharmonic of {n_points} interior points",
    )


@dataclass(frozen=True, eq=False)
class HProcess:
    base: SparseMeasure
    h: HarmonicFn
    rho: float
    rows: dict                   # elem x -> SparseMeasure row p_h(x, .)
    translation_invariant: bool
    rho_exact: Fraction | None = None
    rho2_exact: Fraction | None = None


def _exact_exponential_rows(m: SparseMeasure, base2: tuple):
    """Rational row weights for exponential h when all support steps share one
    parity vector; returns (step weights, rho_exact, rho2_exact) or None."""
    if not (m.exact and all(isinstance(b, (int, Fraction)) for b in base2)):
        return None
    steps = sorted(m.weights)
    d = len(base2)
    parity = tuple(s % 2 for s in steps[0])
    if any(tuple(si % 2 for si in s) != parity for s in steps):
        return None
    tau = [Fraction(b) for b in base2]

    def half_power(s):
        out = Fraction(1)
        for i in range(d):
            out *= tau[i] ** ((s[i] - parity[i]) // 2)
        return out

    terms = {s: m.weights[s] * half_power(s) for s in steps}
    total = sum(terms[s] for s in steps)
    rows = {s: terms[s] / total for s in steps}
    if all(p == 0 for p in parity):
        return rows, total, None
    rho2 = total * total
    for i in range(d):
        if parity[i]:
            rho2 *= tau[i]
    return rows, None, rho2


def build_h_process(m: SparseMeasure, h: HarmonicFn, domain: Iterable[Elem],
                    tol: float = HARMONIC_TOL) -> HProcess:
    """Rows p_h(x, y) = mu(x^{-1}y) h(y) / (rho h(x)) over the domain.

    Rows are exact rationals when the ingredients allow it (rational explicit
    h with rational rho, or a rational-base exponential h with uniform step
    parity); otherwise floats.  Substochasticity is verified row by row.
    """
    report = harmonic_check(m, h, tol=tol)
    if not report.ok:
        raise WalklabError(f"h fails the subharmonicity check: {report.detail}")
    mult = multiplier(m.spec)
    items = m.sorted_items()
    domain = sorted(set(domain))
    rho_exact = rho2_exact = None
    rows: dict = {}

    if h.is_exponential:
        exact = _exact_exponential_rows(m, h.exp_base2) if h.kind == "harmonic" else None
        if exact is not None:
            step_row, rho_exact, rho2_exact = exact
            for x in domain:
                rows[x] = SparseMeasure(m.spec, {mult(x, s): w for s, w in step_row.items()}, True)
        else:
            step_row_f = {s: float(w) * h.step_ratio(s) / h.rho for s, w in items}
            for x in domain:
                rows[x] = SparseMeasure(
                    m.spec, {mult(x, s): w for s, w in step_row_f.items() if w > 0}, False
                )
        invariant = True
    else:
        dom_h = h.values.keys()
        # explicit-value rows: exact only when measure, values, and rho are all rational
        exact_vals = (
            m.exact
            and all(isinstance(v, (int, Fraction)) for v in h.values.values())
            and isinstance(h.rho, (int, Fraction))
        )
        for x in domain:
            if x not in dom_h:
                raise WalklabError(f"domain point {x!r} has no h value")
            targets = [(mult(x, s), s, w) for s, w in items]
            missing = [y for y, _, _ in targets if y not in dom_h]
            if missing:
                raise WalklabError(f"h not valued at neighbors {missing[:3]!r} of {x!r}")
            if exact_vals:
                hx = Fraction(h.values[x])
                row = {y: Fraction(w) * Fraction(h.values[y]) / (Fraction(h.rho) * hx)
                       for y, _, w in targets}
                rows[x] = SparseMeasure(m.spec, row, True)
            else:
                hx = float(h.values[x])
                row = {y: float(w) * float(h.values[y]) / (h.rho * hx) for y, _, w in targets}
                rows[x] = SparseMeasure(m.spec, {y: w for y, w in row.items() if w > 0}, False)
        ratios = {float(v) for v in h.values.values()}
        invariant = len(ratios) == 1

    for x, row in rows.items():
        mass = row.mass
        limit = 1 if row.exact else 1 + tol
        if mass > limit:
            raise WalklabError(f"row at {x!r} has mass {float(mass)} > 1: h is not subharmonic")
        if h.kind == "harmonic" and not row.exact and abs(float(mass) - 1.0) > tol:
            raise WalklabError(f"harmonic h produced a defective row at {x!r} (mass {float(mass)})")

    rho = float(h.rho)
    if rho_exact is not None:
        rho = float(rho_exact)
    elif rho2_exact is not None:
        rho = math.sqrt(float(rho2_exact))
    return HProcess(m, h, rho, rows, invariant, rho_exact, rho2_exact)


@dataclass(frozen=True)
class HDiagReport:
    values: tuple                # ((n, p_h^(n)(e,e)), ...)
    root_tail: tuple             # last few (n, value^{1/n})
    cross_max_rel: float | None  # vs. independent conditioned-walk convolution
    strict_ok: bool | None       # 0 < diag < 1 for n >= k0 (when k0 given)


def h_process_diag(hp: HProcess, n_max: int, k0: int | None = None, cap: int = DEFAULT_CAP) -> HDiagReport:
    """Diagonal p_h^(n)(e,e) = mu^(n)(e) / rho^n, with an independent
    cross-check by convolving the conditioned step law when the rows are
    translation invariant."""
    e = identity(hp.base.spec)
    a = power_trace(hp.base.as_float(), n_max, [e], cap=cap).at(e)

    diag = []
    if hp.rho_exact is not None or hp.rho2_exact is not None:
        rn = Fraction(1)
        step = hp.rho_exact if hp.rho_exact is not None else hp.rho2_exact
        for n in range(1, n_max + 1):
            if hp.rho_exact is not None:
                rn *= step
                diag.append(a[n - 1] / float(rn))
            else:
                if n % 2 == 0:
                    rn *= step
                    diag.append(a[n - 1] / float(rn))
                else:
                    # odd powers vanish for odd-parity supports
                    diag.append(a[n - 1] / (math.sqrt(float(step)) * float(rn)))
    else:
        for n in range(1, n_max + 1):
            diag.append(a[n - 1] / hp.rho**n)

    cross = None
    if hp.translation_invariant and e in hp.rows:
        lam = hp.rows[e].as_float()
        lam_diag = power_trace(lam, n_max, [e], cap=cap).at(e)
        rels = [
            abs(lam_diag[n - 1] - diag[n - 1]) / diag[n - 1]
            for n in range(1, n_max + 1)
            if diag[n - 1] > 0
        ]
        cross = max(rels) if rels else None

    roots = [(n, diag[n - 1] ** (1.0 / n)) for n in range(1, n_max + 1) if diag[n - 1] > 0]
    strict_ok = None
    if k0 is not None:
        strict_ok = all(diag[n - 1] < 1.0 for n in range(k0, n_max + 1))
    return HDiagReport(
        tuple((n, diag[n - 1]) for n in range(1, n_max + 1)),
        tuple(roots[-10:]),
        cross,
        strict_ok,
    )


# ---------------------------------------------------------------------------
# Bernoulli tail machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BernoulliCheck:
    a: float
    epsilon: float
    tail_values: tuple           # ((n, upper comparison-set tail), ...)
    fitted_delta: float
    fitted_intercept: float
    d_tail_values: tuple         # analogous lower tails
    fitted_delta_d: float
    fitted_intercept_d: float
    envelope_ok: bool


def bernoulli_pmf(a: float, n: int) -> np.ndarray:
    """Binomial(n, a) pmf in log space; exact to 1e-12 mass up to n ~ 1e5."""
    if not 0.0 < a < 1.0:
        raise WalklabError(f"Bernoulli parameter must lie in (0,1), got {a}")
    k = np.arange(n + 1, dtype=np.float64)
    logpmf = (
        gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
        + k * math.log(a) + (n - k) * math.log1p(-a)
    )
    pmf = np.exp(logpmf)
    total = float(pmf.sum())
    if abs(total - 1.0) > 1e-12:
        raise WalklabError(f"pmf normalization off by {abs(total - 1.0):.3e} at n={n}")
    return pmf


def _fit_exponential_tail(points: list[tuple[int, float]]) -> tuple[float, float, bool]:
    """(delta, intercept, envelope_ok): least-squares slope on log tails,
    intercept raised so exp(-delta n + c) dominates every tail."""
    positive = [(n, t) for n, t in points if t > 0]
    if not positive:
        return math.inf, -math.inf, True
    if len(positive) == 1:
        n, t = positive[0]
        return math.inf, math.log(t), True
    ns = np.array([n for n, _ in positive], dtype=np.float64)
    logs = np.array([math.log(t) for _, t in positive])
    slope, intercept = np.polyfit(ns, logs, 1)
    delta = -float(slope)
    c = float(np.max(logs + delta * ns))
    ok = all(t <= math.exp(-delta * n + c) * (1 + 1e-12) for n, t in positive)
    return delta, c, ok


def bernoulli_tail_check(a: float, epsilon: float, n_range: Iterable[int]) -> BernoulliCheck:
    """Mass outside the ratio-comparison sets, fitted to an exponential decay.

    For each n, the upper set keeps k with pmf(n,k) <= (1+eps) pmf(n+1,k+1)
    and the lower set keeps k with pmf(n+1,k+1) <= (1+eps) pmf(n,k); the
    reported tails are the pmf mass of the complements, evaluated by direct
    comparison of pmf values.
    """
    if epsilon <= 0:
        raise WalklabError(f"epsilon must be > 0, got {epsilon}")
    ns = sorted(set(int(n) for n in n_range))
    if not ns or ns[0] < 1:
        raise WalklabError("n_range must contain positive integers")
    tails_c = []
    tails_d = []
    for n in ns:
        p_n = bernoulli_pmf(a, n)
        p_n1 = bernoulli_pmf(a, n + 1)
        in_c = p_n <= (1.0 + epsilon) * p_n1[1:]
        in_d = p_n1[1:] <= (1.0 + epsilon) * p_n
        tails_c.append((n, float(p_n[~in_c].sum())))
        tails_d.append((n, float(p_n1[1:][~in_d].sum())))
    delta_c, c_c, ok_c = _fit_exponential_tail(tails_c)
    delta_d, c_d, ok_d = _fit_exponential_tail(tails_d)
    return BernoulliCheck(
        a, epsilon, tuple(tails_c), delta_c, c_c, tuple(tails_d), delta_d, c_d, ok_c and ok_d
    )


# ---------------------------------------------------------------------------
# generic finite substochastic chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainRatioReport:
    n_states: int
    ratio_limit: float
    eigenvalue: float
    entry_spread: float          # max gap between per-entry extrapolated limits
    aperiodicity_witness: tuple  # step counts with positive diagonal minimum, gcd 1
    history: tuple               # ((n, ratio at entry (0,0)), ...) subsampled


def _strongly_connected(adj: np.ndarray) -> bool:
    n = len(adj)

    def reach(mat):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            nxt = []
            for i in frontier:
                for j in np.flatnonzero(mat[i]):
                    if not seen[j]:
                        seen[j] = True
                        nxt.append(int(j))
            frontier = nxt
        return seen.all()

    return bool(reach(adj) and reach(adj.T))


def power_iteration(P: np.ndarray, tol: float = 1e-13, max_iter: int = 200_000) -> float:
    """Dominant eigenvalue of a nonnegative primitive matrix."""
    n = len(P)
    v = np.ones(n) / math.sqrt(n)
    lam = 0.0
    for _ in range(max_iter):
        w = P @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            raise WalklabError("power iteration hit the zero vector")
        w /= norm
        lam_new = float(w @ (P @ w))
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam = lam_new
        v = w
    raise WalklabError("power iteration did not converge")


def generic_chain_ratio(P, n_max: int, gcd_horizon: int = 64) -> ChainRatioReport:
    """Entrywise ratio limits of a finite irreducible, strongly aperiodic
    substochastic matrix, cross-checked against its dominant eigenvalue.

    Strong aperiodicity is certified by collecting step counts whose matrix
    power has a strictly positive diagonal minimum, and requiring gcd 1.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise WalklabError("transition matrix must be square")
    if (P < 0).any():
        raise WalklabError("transition matrix has negative entries")
    if (P.sum(axis=1) > 1 + 1e-12).any():
        raise WalklabError("row sums exceed 1: matrix is not substochastic")
    n = len(P)
    if not _strongly_connected(P > 0):
        raise WalklabError("matrix is not irreducible")

    witness = []
    M = np.eye(n)
    g = 0
    for k in range(1, gcd_horizon + 1):
        M = M @ P
        if float(np.min(np.diag(M))) > 0:
            witness.append(k)
            g = math.gcd(g, k)
            if g == 1 and len(witness) >= 1:
                break
    if g != 1:
        raise WalklabError(
            f"no witness of strong aperiodicity within {gcd_horizon} steps (gcd {g or 'undefined'})"
        )

    # renormalize each power so deep powers stay inside float range; the
    # entrywise ratio p^(k+1)/p^(k) is scale * N_{k+1} / N_k
    N = P.copy()
    history = []
    ratio_mat = None
    record_every = max(1, n_max // 200)
    for k in range(1, n_max):
        T = N @ P
        c = float(T.max())
        if c <= 0:
            raise WalklabError("matrix power vanished")
        Tn = T / c
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio_mat = np.where(N > 0, c * Tn / np.where(N > 0, N, 1.0), np.nan)
        if k % record_every == 0 or k == n_max - 1:
            history.append((k, float(ratio_mat[0, 0])))
        N = Tn

    finite = ratio_mat[np.isfinite(ratio_mat)]
    if len(finite) == 0:
        raise WalklabError("no positive entries to form ratios")
    ratio_limit = float(np.mean(finite))
    spread = float(np.max(finite) - np.min(finite))
    eig = power_iteration(P)
    return ChainRatioReport(
        n, ratio_limit, eig, spread, tuple(witness), tuple(history)
    )
