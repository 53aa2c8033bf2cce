"""Finitely supported measures on a group: validation, convolution, powers.

Weights are either exact ``Fraction`` values (``exact=True``) or doubles.
Float convolution accumulates contributions to each output element in the
canonical element order, so results are bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BackendMismatchError, CapExceededError, MeasureError, WalklabError
from .groups import (
    DEFAULT_CAP,
    Elem,
    GroupSpec,
    check_elem,
    finite_index,
    identity,
    inverter,
    multiplier,
)

FLOAT_MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SparseMeasure:
    """Nonnegative measure with finite support; total mass at most 1."""

    spec: GroupSpec
    weights: dict
    exact: bool

    @property
    def mass(self):
        return sum(self.weights[x] for x in sorted(self.weights))

    @property
    def is_probability(self) -> bool:
        m = self.mass
        return m == 1 if self.exact else abs(m - 1.0) <= FLOAT_MASS_TOL

    @property
    def support(self) -> frozenset:
        return frozenset(self.weights)

    def __call__(self, x: Elem):
        return self.weights.get(x, Fraction(0) if self.exact else 0.0)

    def sorted_items(self) -> list:
        return [(x, self.weights[x]) for x in sorted(self.weights)]

    def as_float(self) -> "SparseMeasure":
        if not self.exact:
            return self
        return SparseMeasure(self.spec, {x: float(w) for x, w in self.weights.items()}, False)


@dataclass(frozen=True)
class SupportSet:
    spec: GroupSpec
    elements: frozenset


def measure(spec: GroupSpec, weights: Mapping[Elem, object], exact: bool | None = None) -> SparseMeasure:
    """Build and validate a SparseMeasure; exact mode is inferred when not given."""
    if exact is None:
        exact = all(isinstance(w, (int, Fraction)) for w in weights.values())
    conv = Fraction if exact else float
    wd = {x: conv(w) for x, w in weights.items()}
    return validate(SparseMeasure(spec, wd, exact))


def delta(spec: GroupSpec, x: Elem, exact: bool = True) -> SparseMeasure:
    return measure(spec, {x: 1}, exact=exact)


def validate(m: SparseMeasure) -> SparseMeasure:
    if not m.weights:
        raise MeasureError("measure has empty support")
    for x in m.weights:
        check_elem(m.spec, x)
    for x, w in m.weights.items():
        if m.exact and not isinstance(w, Fraction):
            raise MeasureError(f"exact measure holds a non-rational weight at {x!r}")
        if w <= 0:
            raise MeasureError(f"non-positive weight {w} at {x!r}")
    mass = m.mass
    tol = 0 if m.exact else FLOAT_MASS_TOL
    if mass > 1 + tol:
        raise MeasureError(f"total mass {mass} exceeds 1")
    return m


def support_set(m: SparseMeasure) -> SupportSet:
    return SupportSet(m.spec, m.support)


def reverse(m: SparseMeasure) -> SparseMeasure:
    """Image of the measure under group inversion: result(x) = m(x^{-1})."""
    invf = inverter(m.spec)
    return SparseMeasure(m.spec, {invf(x): w for x, w in m.weights.items()}, m.exact)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _check_pair(m1: SparseMeasure, m2: SparseMeasure) -> None:
    if m1.spec != m2.spec:
        raise BackendMismatchError("convolution operands live on different groups")
    if m1.exact != m2.exact:
        raise MeasureError("convolution operands have different weight modes")


def convolve(m1: SparseMeasure, m2: SparseMeasure, cap: int = DEFAULT_CAP) -> SparseMeasure:
    """Left convolution: (m1 * m2)(z) = sum_x m1(x) m2(x^{-1} z)."""
    _check_pair(m1, m2)
    mult = multiplier(m1.spec)
    items1 = m1.sorted_items()
    items2 = m2.sorted_items()
    out: dict = {}
    zero = Fraction(0) if m1.exact else 0.0
    for x, wx in items1:
        for y, wy in items2:
            z = mult(x, y)
            out[z] = out.get(z, zero) + wx * wy
        if len(out) > cap:
            raise CapExceededError(f"convolution support exceeded cap {cap}")
    if not m1.exact:
        out = {z: w for z, w in out.items() if w != 0.0}
    if not out:
        raise MeasureError("convolution underflowed to the zero measure")
    return SparseMeasure(m1.spec, out, m1.exact)


def power(
    m: SparseMeasure,
    n: int,
    cap: int = DEFAULT_CAP,
    prune: float | None = None,
) -> list[SparseMeasure]:
    """Convolution powers m, m^(2), ..., m^(n).

    ``prune`` (float mode only) drops weights below the threshold after each
    step; it biases long-horizon ratio statistics and is off by default.
    """
    if n < 1:
        raise WalklabError(f"power requires n >= 1, got {n}")
    if prune is not None and m.exact:
        raise MeasureError("prune threshold is only meaningful in float mode")
    powers: list[SparseMeasure] = []
    cur = m
    for k in range(1, n + 1):
        if k > 1:
            try:
                cur = convolve(cur, m, cap=cap)
            except CapExceededError:
                raise CapExceededError(
                    f"support cap {cap} exceeded at power {k}", n_reached=k - 1, partial=powers
                ) from None
            if prune is not None:
                kept = {x: w for x, w in cur.weights.items() if w >= prune}
                if kept:
                    cur = SparseMeasure(cur.spec, kept, cur.exact)
        powers.append(cur)
    return powers


# ---------------------------------------------------------------------------
# power traces (values of mu^(n) at fixed targets, without storing all powers)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerTrace:
    """Values mu^(n)(x) for n = 1..n_max at each requested target x."""

    n_max: int
    values: dict          # target elem -> list of weights, index n-1
    exact: bool

    def at(self, x: Elem) -> list:
        return self.values[x]


def _dense_lattice_trace(m: SparseMeasure, n_max: int, targets: Sequence[Elem], cap: int) -> PowerTrace | None:
    """Dense shift-add engine on the integer lattice (float free_abelian only)."""
    d = m.spec.rank
    steps = sorted(m.weights)
    lo = tuple(n_max * min(0, min(s[i] for s in steps)) for i in range(d))
    hi = tuple(n_max * max(0, max(s[i] for s in steps)) for i in range(d))
    shape = tuple(hi[i] - lo[i] + 1 for i in range(d))
    size = 1
    for s in shape:
        size *= s
    if size > cap:
        return None

    arr = np.zeros(shape, dtype=np.float64)
    origin = tuple(-lo[i] for i in range(d))
    arr[origin] = 1.0

    def target_index(x):
        idx = tuple(x[i] - lo[i] for i in range(d))
        if all(0 <= idx[i] < shape[i] for i in range(d)):
            return idx
        return None

    tidx = {x: target_index(x) for x in targets}
    values: dict = {x: [] for x in targets}
    weights = [float(m.weights[s]) for s in steps]
    for _ in range(n_max):
        new = np.zeros(shape, dtype=np.float64)
        for s, w in zip(steps, weights):
            dst = tuple(slice(max(0, s[i]), shape[i] + min(0, s[i])) for i in range(d))
            src = tuple(slice(max(0, -s[i]), shape[i] - max(0, s[i])) for i in range(d))
            new[dst] += w * arr[src]
        arr = new
        for x in targets:
            values[x].append(float(arr[tidx[x]]) if tidx[x] is not None else 0.0)
    return PowerTrace(n_max, values, exact=False)


def power_trace(
    m: SparseMeasure,
    n_max: int,
    targets: Iterable[Elem],
    cap: int = DEFAULT_CAP,
    prune: float | None = None,
) -> PowerTrace:
    """Track mu^(n) at the given targets for n = 1..n_max."""
    targets = list(dict.fromkeys(targets))
    for x in targets:
        check_elem(m.spec, x)
    if m.spec.kind == "free_abelian" and not m.exact and prune is None:
        trace = _dense_lattice_trace(m, n_max, targets, cap)
        if trace is not None:
            return trace

    zero = Fraction(0) if m.exact else 0.0
    mult = multiplier(m.spec)
    step_items = m.sorted_items()
    values: dict = {x: [] for x in targets}
    cur = dict(m.weights)
    for n in range(1, n_max + 1):
        if n > 1:
            out: dict = {}
            for x in sorted(cur):
                wx = cur[x]
                for s, ws in step_items:
                    z = mult(x, s)
                    out[z] = out.get(z, zero) + wx * ws
            if not m.exact:
                out = {z: w for z, w in out.items() if w != 0.0}
                if prune is not None:
                    out = {z: w for z, w in out.items() if w >= prune}
            if len(out) > cap:
                raise CapExceededError(f"support cap {cap} exceeded at power {n}", n_reached=n - 1)
            if not out:
                raise MeasureError(f"power {n} underflowed to the zero measure")
            cur = out
        for x in targets:
            values[x].append(cur.get(x, zero))
    return PowerTrace(n_max, values, m.exact)


# ---------------------------------------------------------------------------
# support powers
# ---------------------------------------------------------------------------

class SupportStepper:
    """Iterates the product sets S, S^2, S^3, ... for a fixed support S.

    Backend-specific state: boolean masks over a finite group, packed int64
    lattice codes on free abelian groups, plain sets elsewhere.  ``state_key``
    returns a hashable snapshot of the current set for cycle detection.
    """

    def __init__(self, spec: GroupSpec, support: Iterable[Elem], max_steps: int, cap: int = DEFAULT_CAP):
        self.spec = spec
        self.cap = cap
        self.n = 1
        base = sorted(set(support))
        if not base:
            raise WalklabError("empty support")
        for x in base:
            check_elem(spec, x)
        self._mode = "generic"
        if spec.is_finite:
            self._mode = "finite"
            fi = finite_index(spec)
            self._fi = fi
            self._gen_idx = np.array([fi.index[x] for x in base], dtype=np.int32)
            mask = np.zeros(fi.order, dtype=bool)
            mask[self._gen_idx] = True
            self._mask = mask
        elif spec.kind == "free_abelian":
            self._mode = "lattice"
            d = spec.rank
            bound = max_steps * max(max(abs(v) for v in x) for x in base) + 1
            m_base = 2 * bound + 1
            radix = np.array([m_base ** i for i in range(d)], dtype=np.int64)
            if m_base ** d >= 2 ** 62:
                self._mode = "generic"  # codes would overflow int64
            else:
                self._radix = radix
                self._bound = bound
                vecs = np.array(base, dtype=np.int64)
                self._deltas = vecs @ radix
                self._code_e = int(np.full(d, bound, dtype=np.int64) @ radix)
                self._codes = np.unique(vecs @ radix + self._code_e)
        if self._mode == "generic":
            self._mult = multiplier(spec)
            self._set = frozenset(base)
        self._base = base

    def step(self) -> None:
        self.n += 1
        if self._mode == "finite":
            fi = self._fi
            idx = np.flatnonzero(self._mask)
            new = np.zeros(fi.order, dtype=bool)
            for g in self._gen_idx:
                new[fi.table[idx, g]] = True
            self._mask = new
        elif self._mode == "lattice":
            prods = (self._codes[:, None] + self._deltas[None, :]).ravel()
            self._codes = np.unique(prods)
            if len(self._codes) > self.cap:
                raise CapExceededError(f"support cap {self.cap} exceeded at power {self.n}", n_reached=self.n - 1)
        else:
            mult = self._mult
            new = {mult(x, s) for x in self._set for s in self._base}
            if len(new) > self.cap:
                raise CapExceededError(f"support cap {self.cap} exceeded at power {self.n}", n_reached=self.n - 1)
            self._set = frozenset(new)

    def contains_identity(self) -> bool:
        return self.contains(identity(self.spec))

    def contains(self, x: Elem) -> bool:
        if self._mode == "finite":
            return bool(self._mask[self._fi.index[x]])
        if self._mode == "lattice":
            if any(abs(v) > self._bound for v in x):
                return False
            code = int(np.array(x, dtype=np.int64) @ self._radix) + self._code_e
            i = int(np.searchsorted(self._codes, code))
            return i < len(self._codes) and self._codes[i] == code
        return x in self._set

    def finite_indices(self) -> np.ndarray:
        if self._mode != "finite":
            raise WalklabError("finite_indices is only available on finite backends")
        return np.flatnonzero(self._mask)

    def state_key(self):
        if self._mode == "finite":
            return self._mask.tobytes()
        if self._mode == "lattice":
            return self._codes.tobytes()
        return self._set

    def size(self) -> int:
        if self._mode == "finite":
            return int(self._mask.sum())
        if self._mode == "lattice":
            return len(self._codes)
        return len(self._set)

    def elements(self) -> frozenset:
        if self._mode == "finite":
            fi = self._fi
            return frozenset(fi.elements[i] for i in np.flatnonzero(self._mask))
        if self._mode == "lattice":
            d = self.spec.rank
            m_base = 2 * self._bound + 1
            out = []
            for code in self._codes.tolist():
                vec = []
                for _ in range(d):
                    vec.append(code % m_base - self._bound)
                    code //= m_base
                out.append(tuple(vec))
            return frozenset(out)
        return self._set


def support_power(s: SupportSet, n: int, cap: int = DEFAULT_CAP) -> list[SupportSet]:
    """Product sets S, S^2, ..., S^n (boolean convolution; exact in any weight mode)."""
    if n < 1:
        raise WalklabError(f"support_power requires n >= 1, got {n}")
    if not s.elements:
        raise WalklabError("empty support")
    stepper = SupportStepper(s.spec, s.elements, max_steps=n, cap=cap)
    out = [SupportSet(s.spec, stepper.elements())]
    for _ in range(n - 1):
        stepper.step()
        out.append(SupportSet(s.spec, stepper.elements()))
    return out


# ---------------------------------------------------------------------------
# irreducibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IrreducibilityReport:
    status: str                    # certified_yes | certified_no | unknown
    reason: str
    ball_covered: int | None = None
    horizon: int | None = None


def _semigroup_closure_mask(spec: GroupSpec, support: Iterable[Elem]) -> np.ndarray:
    fi = finite_index(spec)
    gen_idx = np.array(sorted(fi.index[x] for x in support), dtype=np.int32)
    mask = np.zeros(fi.order, dtype=bool)
    mask[gen_idx] = True
    frontier = gen_idx
    while len(frontier):
        prods = fi.table[np.ix_(frontier, gen_idx)].ravel()
        fresh = np.unique(prods[~mask[prods]])
        mask[fresh] = True
        frontier = fresh
    return mask


def _axis_separated(vectors: list[tuple]) -> int | None:
    """Coordinate axis (1-based, negative for the -e_i direction) strictly
    separating all vectors from the origin, if one exists."""
    if not vectors:
        return None
    d = len(vectors[0])
    for i in range(d):
        if all(v[i] > 0 for v in vectors):
            return i + 1
        if all(v[i] < 0 for v in vectors):
            return -(i + 1)
    return None


def _covered_ball_radius(spec: GroupSpec, union: frozenset, horizon: int) -> int:
    from .groups import ball  # local import to avoid cycle at module load

    if spec.kind == "free_abelian":
        gens = []
        for i in range(spec.rank):
            e_i = tuple(1 if j == i else 0 for j in range(spec.rank))
            gens += [e_i, tuple(-v for v in e_i)]
    else:
        gens = [(v,) for v in range(1, spec.rank + 1)] + [(-v,) for v in range(1, spec.rank + 1)]
    covered = 0
    for r in range(1, horizon + 1):
        if not ball(spec, gens, r) <= union:
            break
        covered = r
    return covered


def irreducibility_check(m: SparseMeasure, horizon: int = 8, cap: int = DEFAULT_CAP) -> IrreducibilityReport:
    """Decide whether the semigroup generated by the support is the whole group.

    Finite backends are decided exactly by BFS closure.  Infinite backends can
    only be certified negative (via a separating coordinate homomorphism); the
    positive direction reports ``unknown`` plus the generator-ball radius the
    iterated supports were seen to cover within the horizon.
    """
    spec = m.spec
    support = sorted(m.support)

    if spec.is_finite:
        mask = _semigroup_closure_mask(spec, support)
        order = finite_index(spec).order
        reached = int(mask.sum())
        if reached == order:
            return IrreducibilityReport("certified_yes", f"semigroup closure reaches all {order} elements")
        return IrreducibilityReport(
            "certified_no", f"semigroup closure reaches only {reached} of {order} elements"
        )

    if spec.kind == "free_abelian":
        vectors = support
    else:
        # abelianization: letter exponent sums; a separating axis there
        # separates the original semigroup as well
        vectors = []
        for word in support:
            vec = [0] * spec.rank
            for v in word:
                vec[abs(v) - 1] += 1 if v > 0 else -1
            vectors.append(tuple(vec))

    axis = _axis_separated(vectors)
    if axis is not None:
        direction = f"+e_{axis}" if axis > 0 else f"-e_{-axis}"
        return IrreducibilityReport(
            "certified_no", f"support is strictly on the {direction} side of a coordinate hyperplane"
        )
    if support == [identity(spec)]:
        return IrreducibilityReport("certified_no", "support is the identity alone")

    stepper = SupportStepper(spec, support, max_steps=horizon, cap=cap)
    union = set(stepper.elements())
    for _ in range(1, horizon):
        stepper.step()
        union |= stepper.elements()
    covered = _covered_ball_radius(spec, frozenset(union), horizon)
    return IrreducibilityReport(
        "unknown",
        f"no separating axis found; iterated supports cover the generator ball of radius {covered}",
        ball_covered=covered,
        horizon=horizon,
    )
