"""Walk period, coset partition, and the index-d normal subgroup.

The period is the gcd of the return times N = {n : e in S^n}.  On finite
backends the sequence of support powers is eventually periodic, which lets us
certify the period and the eventual-positivity threshold exactly; on infinite
backends the gcd over a finite horizon is reported as a candidate value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import CapExceededError, LabelConflictError, StabilizationError, WalklabError
from .groups import (
    DEFAULT_CAP,
    Elem,
    GroupSpec,
    all_elements,
    finite_index,
    identity,
    inverter,
    multiplier,
)
from .measures import SparseMeasure, SupportStepper

DEFAULT_N_MAX = 64


@dataclass(frozen=True)
class PeriodReport:
    d: int
    return_times: tuple          # N intersected with [1, horizon], sorted
    n0: int | None               # least n0: e in S^n for every multiple n >= n0 of d
    certification: str           # "exact" or "candidate"
    horizon: int


@dataclass(frozen=True)
class CosetPartition:
    d: int
    labels: dict                 # elem -> label in [0, d)
    gamma0: frozenset            # label-0 elements within the explored domain
    quotient_generator_order: int


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class VerificationReport:
    scope: str                   # "full" or "ball"
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


# ---------------------------------------------------------------------------
# return times and period
# ---------------------------------------------------------------------------

def compute_return_times(m: SparseMeasure, n_max: int = DEFAULT_N_MAX, cap: int = DEFAULT_CAP) -> set[int]:
    """N within [1, n_max]: step counts whose support power contains the identity."""
    if n_max < 1:
        raise WalklabError(f"n_max must be >= 1, got {n_max}")
    stepper = SupportStepper(m.spec, m.support, max_steps=n_max, cap=cap)
    out = set()
    for n in range(1, n_max + 1):
        if n > 1:
            stepper.step()
        if stepper.contains_identity():
            out.add(n)
    return out


def _finite_flag_cycle(m: SparseMeasure, cap: int, step_budget: int) -> tuple[list[bool], int, int]:
    """Return (identity-membership flags for n=1..b-1, cycle start a, cycle length L).

    Flags are indexed flags[n-1].  For n >= a the support powers satisfy
    S^n = S^(a + (n-a) mod L).
    """
    stepper = SupportStepper(m.spec, m.support, max_steps=step_budget, cap=cap)
    seen: dict = {}
    flags: list[bool] = []
    n = 1
    while True:
        key = stepper.state_key()
        if key in seen:
            return flags, seen[key], n - seen[key]
        seen[key] = n
        flags.append(stepper.contains_identity())
        if n >= step_budget:
            raise StabilizationError(
                f"support powers did not become periodic within {step_budget} steps"
            )
        stepper.step()
        n += 1


def compute_period(m: SparseMeasure, n_max: int = DEFAULT_N_MAX, cap: int = DEFAULT_CAP) -> PeriodReport:
    """Period d = gcd of return times, with exact certification on finite backends.

    On finite backends the horizon is extended past ``n_max`` when needed so
    that the reported return times always have gcd equal to the certified d.
    Infinite backends report the candidate gcd over [1, n_max]; a longer
    horizon can only lower it.
    """
    spec = m.spec
    if spec.is_finite:
        order = finite_index(spec).order
        budget = max(4 * order + 16, n_max + 1)
        flags, a, length = _finite_flag_cycle(m, cap, budget)

        def flag_at(n: int) -> bool:
            if n <= len(flags):
                return flags[n - 1]
            return flags[a - 1 + (n - a) % length]

        horizon = max(n_max, a + 2 * length)
        returns = {n for n in range(1, horizon + 1) if flag_at(n)}
        if not returns:
            raise WalklabError(f"no return time found up to {horizon}; walk never returns to e")
        d = math.gcd(*returns)
        # tail residues (mod cycle length) of multiples of d must all return,
        # otherwise no eventual-positivity threshold exists
        first_tail_multiple = ((a + d - 1) // d) * d
        for k in range(first_tail_multiple, first_tail_multiple + length, d):
            if not flag_at(k):
                raise WalklabError(
                    "return times are not eventually periodic on multiples of d; "
                    "input is not an irreducible walk"
                )
        failing = [n for n in range(d, a + length, d) if not flag_at(n)]
        n0 = (failing[-1] + 1) if failing else 1
        return PeriodReport(d, tuple(sorted(returns)), n0, "exact", horizon)

    returns = compute_return_times(m, n_max, cap)
    if not returns:
        raise WalklabError(f"no return time <= {n_max} found")
    d = math.gcd(*returns)
    return PeriodReport(d, tuple(sorted(returns)), None, "candidate", n_max)


# ---------------------------------------------------------------------------
# coset labels
# ---------------------------------------------------------------------------

def coset_labeling(m: SparseMeasure, d: int, domain: Iterable[Elem]) -> CosetPartition:
    """BFS labels with label(x s) = label(x) + 1 mod d; conflicts are fatal.

    The domain must contain e and be connected from e under right
    multiplication by the support (within the domain).
    """
    if d < 1:
        raise WalklabError(f"period must be >= 1, got {d}")
    spec = m.spec
    mult = multiplier(spec)
    e = identity(spec)
    dom = set(domain)
    if e not in dom:
        raise WalklabError("labeling domain must contain the identity")
    support = sorted(m.support)
    labels = {e: 0}
    frontier = [e]
    while frontier:
        nxt = []
        for x in frontier:
            lx = labels[x]
            target = (lx + 1) % d
            for s in support:
                y = mult(x, s)
                if y not in dom:
                    continue
                ly = labels.get(y)
                if ly is None:
                    labels[y] = target
                    nxt.append(y)
                elif ly != target:
                    raise LabelConflictError(
                        f"element {y!r} reached with labels {ly} and {target}; "
                        f"period {d} is inconsistent with this walk"
                    )
        frontier = sorted(nxt)
    unreached = dom - labels.keys()
    if unreached:
        raise WalklabError(
            f"{len(unreached)} domain elements unreachable from e under the support; "
            "labeling requires a connected domain"
        )
    gamma0 = frozenset(x for x, l in labels.items() if l == 0)
    x0 = support[0]
    lx0 = labels.get(x0, 1 % d)
    order = d // math.gcd(lx0 % d, d) if d > 1 else 1
    return CosetPartition(d, labels, gamma0, order)


# ---------------------------------------------------------------------------
# the normal subgroup via inverse-power unions (finite backends)
# ---------------------------------------------------------------------------

def gamma0_by_union(m: SparseMeasure, k_max: int | None = None, cap: int = DEFAULT_CAP) -> frozenset:
    """Union over k of S^{-k} S^k, iterated until it stabilizes.

    Finite backends only: the union provably stops growing once it is a
    subgroup, so we stop after ceil(log2 |G|) consecutive equal unions.
    """
    spec = m.spec
    if not spec.is_finite:
        raise WalklabError("gamma0_by_union requires a finite backend")
    fi = finite_index(spec)
    order = fi.order
    if k_max is None:
        k_max = 2 * order
    needed = max(1, math.ceil(math.log2(order))) if order > 1 else 1

    stepper = SupportStepper(spec, m.support, max_steps=k_max + 1, cap=cap)
    union = np.zeros(order, dtype=bool)
    stable = 0
    for k in range(1, k_max + 1):
        if k > 1:
            stepper.step()
        sk = stepper.finite_indices()
        sk_inv = fi.inverse[sk]
        prods = fi.table[np.ix_(sk_inv, sk)].ravel()
        before = union.sum()
        union[prods] = True
        stable = stable + 1 if union.sum() == before else 0
        if stable >= needed:
            return frozenset(fi.elements[i] for i in np.flatnonzero(union))
    raise StabilizationError(
        f"inverse-power union did not stabilize within k_max={k_max}",
        partial=frozenset(fi.elements[i] for i in np.flatnonzero(union)),
    )


# ---------------------------------------------------------------------------
# verification of the structure theorem
# ---------------------------------------------------------------------------

def _support_elements(m: SparseMeasure, n: int, cap: int) -> frozenset:
    stepper = SupportStepper(m.spec, m.support, max_steps=n, cap=cap)
    for _ in range(n - 1):
        stepper.step()
    return stepper.elements()


def _uniform_on(spec: GroupSpec, elems: frozenset, exact: bool) -> SparseMeasure:
    from fractions import Fraction

    w = Fraction(1, len(elems)) if exact else 1.0 / len(elems)
    return SparseMeasure(spec, {x: w for x in elems}, exact)


def _verify_finite(m: SparseMeasure, report: PeriodReport, part: CosetPartition, cap: int) -> VerificationReport:
    spec = m.spec
    fi = finite_index(spec)
    d = part.d
    checks = []

    label_arr = np.empty(fi.order, dtype=np.int64)
    for x, l in part.labels.items():
        label_arr[fi.index[x]] = l
    g0 = np.flatnonzero(label_arr == 0)
    in_g0 = label_arr == 0

    prods = fi.table[np.ix_(g0, g0)]
    closed = bool(in_g0[prods].all())
    has_inv = bool(in_g0[fi.inverse[g0]].all())
    has_e = bool(in_g0[fi.identity])
    checks.append(CheckResult(
        "subgroup", closed and has_inv and has_e,
        f"closure={closed} inverses={has_inv} identity={has_e}",
    ))

    normal = True
    for x in range(fi.order):
        gx = fi.table[g0, x]
        conj = fi.table[fi.inverse[x], gx]
        if not in_g0[conj].all():
            normal = False
            break
    checks.append(CheckResult("normal", normal, "x^-1 Gamma0 x within Gamma0 for every x"))

    sizes = np.bincount(label_arr, minlength=d)
    index_ok = len(np.unique(label_arr)) == d and bool((sizes == len(g0)).all()) and d * len(g0) == fi.order
    checks.append(CheckResult("index", index_ok, f"|G|={fi.order} |Gamma0|={len(g0)} d={d}"))

    x0 = fi.index[min(m.support)]
    cyclic = True
    acc = fi.identity
    seen_labels = []
    for k in range(d):
        if label_arr[acc] != k % d:
            cyclic = False
        seen_labels.append(int(label_arr[acc]))
        acc = fi.table[acc, x0]
    cyclic = cyclic and sorted(seen_labels) == list(range(d))
    checks.append(CheckResult("cyclic_quotient", cyclic, f"labels of x0^k: {seen_labels}"))

    sd = _support_elements(m, d, cap)
    sd_idx = np.array(sorted(fi.index[x] for x in sd), dtype=np.int64)
    supported = bool(in_g0[sd_idx].all())
    # closure of S^d must fill Gamma0, and its own return-time gcd must be 1
    mask = np.zeros(fi.order, dtype=bool)
    mask[sd_idx] = True
    frontier = sd_idx
    while len(frontier):
        nxt = np.unique(fi.table[np.ix_(frontier, sd_idx)].ravel())
        fresh = nxt[~mask[nxt]]
        mask[fresh] = True
        frontier = fresh
    irreducible_on_g0 = bool((mask == in_g0).all())
    md = _uniform_on(spec, sd, m.exact)
    sub_report = compute_period(md, n_max=max(8, report.horizon // max(d, 1)), cap=cap)
    aperiodic = sub_report.d == 1
    checks.append(CheckResult(
        "power_on_gamma0", supported and irreducible_on_g0 and aperiodic,
        f"support(mu^d) in Gamma0={supported} irreducible={irreducible_on_g0} period={sub_report.d}",
    ))
    return VerificationReport("full", tuple(checks))


def _verify_ball(m: SparseMeasure, report: PeriodReport, part: CosetPartition, cap: int) -> VerificationReport:
    spec = m.spec
    mult = multiplier(spec)
    invf = inverter(spec)
    d = part.d
    labels = part.labels
    dom = set(labels)
    g0 = sorted(part.gamma0)
    checks = []

    closed = all(labels[mult(g, h)] == 0 for g in g0 for h in g0 if mult(g, h) in dom)
    has_inv = all(labels[invf(g)] == 0 for g in g0 if invf(g) in dom)
    checks.append(CheckResult("subgroup", closed and has_inv, "checked within the explored ball"))

    normal = True
    for x in dom:
        xi = invf(x)
        for g in g0:
            y = mult(xi, mult(g, x))
            if y in dom and labels[y] != 0:
                normal = False
                break
        if not normal:
            break
    checks.append(CheckResult("normal", normal, "conjugates staying in the ball have label 0"))

    witnessed = sorted(set(labels.values()))
    checks.append(CheckResult("index", witnessed == list(range(d)), f"labels witnessed: {witnessed}"))

    x0 = min(m.support)
    acc = identity(spec)
    cyclic = True
    k = 0
    while k < d:
        if acc in dom and labels[acc] != k % d:
            cyclic = False
            break
        acc = mult(acc, x0)
        k += 1
    checks.append(CheckResult("cyclic_quotient", cyclic, f"labels of x0^k match k mod {d} inside the ball"))

    sd = _support_elements(m, d, cap)
    in_ball = [x for x in sd if x in dom]
    supported = all(labels[x] == 0 for x in in_ball)
    md = _uniform_on(spec, sd, m.exact)
    try:
        sub = compute_period(md, n_max=max(8, report.horizon // max(d, 1)), cap=cap)
        aperiodic = sub.d == 1
        detail = f"support(mu^d) label-0 in ball={supported}, candidate period of mu^d={sub.d}"
    except (WalklabError, CapExceededError) as exc:
        aperiodic = False
        detail = f"support(mu^d) label-0 in ball={supported}; period check failed: {exc}"
    checks.append(CheckResult("power_on_gamma0", supported and aperiodic, detail))
    return VerificationReport("ball", tuple(checks))


def verify_proposition(
    m: SparseMeasure,
    report: PeriodReport,
    partition: CosetPartition,
    cap: int = DEFAULT_CAP,
) -> VerificationReport:
    """Check the structural claims behind the period: the label-0 class is a
    normal subgroup of index d with cyclic quotient, and the d-step walk is
    irreducible and aperiodic on it.

    Finite backends are checked in full; infinite backends within the labeled
    ball (scope "ball").  Any failure indicates an upstream bug or
    non-irreducible input, never expected behavior.
    """
    if partition.d != report.d:
        raise WalklabError(f"partition period {partition.d} != report period {report.d}")
    if m.spec.is_finite and len(partition.labels) == finite_index(m.spec).order:
        return _verify_finite(m, report, partition, cap)
    return _verify_ball(m, report, partition, cap)


def check_cycling(m: SparseMeasure, partition: CosetPartition, n_max: int, cap: int = DEFAULT_CAP) -> list[str]:
    """Violations of the coset cycling law: positive n-step transitions move
    labels by exactly n mod d.  Empty list means consistent."""
    spec = m.spec
    mult = multiplier(spec)
    d = partition.d
    labels = partition.labels
    dom = set(labels)
    violations = []
    stepper = SupportStepper(spec, m.support, max_steps=n_max, cap=cap)
    sample = sorted(dom)[:: max(1, len(dom) // 32)]
    for n in range(1, n_max + 1):
        if n > 1:
            stepper.step()
        sn = [u for u in stepper.elements() if u in dom]
        for u in sn:
            if labels[u] != n % d:
                violations.append(f"label({u!r})={labels[u]} but n={n} mod {d} = {n % d}")
        for x in sample:
            for u in sn[:8]:
                y = mult(x, u)
                if y in dom and labels[y] != (labels[x] + n) % d:
                    violations.append(f"label({x!r}->{y!r}) jumped {labels[y] - labels[x]} at n={n}")
    return violations
