"""Group backends: canonical element forms, products, parsing, and ball exploration.

Four backends are supported:

* ``finite_table``  -- elements are table indices (int)
* ``finite_perm``   -- elements are one-line permutation images (tuple of int)
* ``free_abelian``  -- elements are integer vectors (tuple of int)
* ``free_group``    -- elements are reduced words, letter ``i`` stored as the
  signed integer ``+i`` and its inverse as ``-i`` (1-based)

Elements are plain hashable Python values and compare under the native total
order (ints numerically, tuples lexicographically).  That order is the
canonical order used everywhere a deterministic summation or iteration order
is required.
"""

from __future__ import annotations

import functools
import random
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BackendMismatchError, CapExceededError, ElementParseError, WalklabError

Elem = int | tuple
DEFAULT_CAP = 10_000_000

# full associativity check is O(m^3); above this order we sample triples
_FULL_ASSOC_LIMIT = 64
_ASSOC_SAMPLES = 10_000
# largest finite group for which we materialize the m x m index table
_TABLE_LIMIT = 2048

_KINDS = ("finite_table", "finite_perm", "free_abelian", "free_group")


@dataclass(frozen=True)
class GroupSpec:
    """Backend descriptor.  Construct through the factory functions below."""

    kind: str
    rank: int = 0
    degree: int = 0
    perm_generators: tuple = ()
    table: tuple = ()
    identity_index: int = -1
    inverse_table: tuple = ()

    @property
    def is_finite(self) -> bool:
        return self.kind in ("finite_table", "finite_perm")


def free_abelian(rank: int) -> GroupSpec:
    if rank < 1:
        raise WalklabError(f"free_abelian rank must be >= 1, got {rank}")
    return GroupSpec(kind="free_abelian", rank=rank)


def free_group(rank: int) -> GroupSpec:
    if rank < 1:
        raise WalklabError(f"free_group rank must be >= 1, got {rank}")
    if rank > 26:
        raise WalklabError("free_group rank is capped at 26 (one letter per generator)")
    return GroupSpec(kind="free_group", rank=rank)


def finite_perm(degree: int, generators: Iterable[Sequence[int]]) -> GroupSpec:
    if degree < 1:
        raise WalklabError(f"finite_perm degree must be >= 1, got {degree}")
    gens = tuple(tuple(g) for g in generators)
    for g in gens:
        if len(g) != degree or sorted(g) != list(range(degree)):
            raise WalklabError(f"not a permutation of 0..{degree - 1}: {g}")
    return GroupSpec(kind="finite_perm", degree=degree, perm_generators=gens)


def finite_table(table: Iterable[Sequence[int]]) -> GroupSpec:
    """Validate and wrap a full multiplication table.

    The table must describe a group: a two-sided identity row/column, two-sided
    inverses, and associativity (checked exhaustively for order <= 64, on
    10^4 seeded random triples above that).
    """
    rows = tuple(tuple(r) for r in table)
    m = len(rows)
    if m == 0:
        raise WalklabError("empty multiplication table")
    for r in rows:
        if len(r) != m or any(not (0 <= v < m) for v in r):
            raise WalklabError("multiplication table is not m x m over 0..m-1")
    t = np.array(rows, dtype=np.int64)

    identity = -1
    for i in range(m):
        if all(t[i, j] == j for j in range(m)) and all(t[j, i] == j for j in range(m)):
            identity = i
            break
    if identity < 0:
        raise WalklabError("multiplication table has no two-sided identity")

    inv = [-1] * m
    for i in range(m):
        js = np.flatnonzero(t[i] == identity)
        if len(js) != 1 or t[js[0], i] != identity:
            raise WalklabError(f"element {i} has no two-sided inverse")
        inv[i] = int(js[0])

    if m <= _FULL_ASSOC_LIMIT:
        left = t[t]                 # left[a,b,c] = t[t[a,b], c]
        right = t[:, t]             # right[a,b,c] = t[a, t[b,c]]
        if not np.array_equal(left, right):
            raise WalklabError("multiplication table is not associative")
    else:
        rng = random.Random(0)
        for _ in range(_ASSOC_SAMPLES):
            a, b, c = (rng.randrange(m) for _ in range(3))
            if t[t[a, b], c] != t[a, t[b, c]]:
                raise WalklabError(f"multiplication table not associative at ({a},{b},{c})")

    return GroupSpec(
        kind="finite_table",
        table=rows,
        identity_index=identity,
        inverse_table=tuple(inv),
    )


# ---------------------------------------------------------------------------
# element arithmetic
# ---------------------------------------------------------------------------

def identity(spec: GroupSpec) -> Elem:
    if spec.kind == "finite_table":
        return spec.identity_index
    if spec.kind == "finite_perm":
        return tuple(range(spec.degree))
    if spec.kind == "free_abelian":
        return (0,) * spec.rank
    if spec.kind == "free_group":
        return ()
    raise WalklabError(f"unknown backend {spec.kind!r}")


def check_elem(spec: GroupSpec, x: Elem) -> None:
    """Raise BackendMismatchError unless ``x`` is a canonical element of ``spec``."""
    ok = False
    if spec.kind == "finite_table":
        ok = isinstance(x, int) and 0 <= x < len(spec.table)
    elif spec.kind == "finite_perm":
        ok = isinstance(x, tuple) and len(x) == spec.degree and sorted(x) == list(range(spec.degree))
    elif spec.kind == "free_abelian":
        ok = isinstance(x, tuple) and len(x) == spec.rank and all(isinstance(v, int) for v in x)
    elif spec.kind == "free_group":
        ok = (
            isinstance(x, tuple)
            and all(isinstance(v, int) and v != 0 and abs(v) <= spec.rank for v in x)
            and all(x[i] != -x[i + 1] for i in range(len(x) - 1))
        )
    if not ok:
        raise BackendMismatchError(f"{x!r} is not a canonical {spec.kind} element")


def _word_mul(a: tuple, b: tuple) -> tuple:
    # concatenate with cancellation at the junction; inputs reduced => output reduced
    i, j = len(a), 0
    nb = len(b)
    while i > 0 and j < nb and a[i - 1] == -b[j]:
        i -= 1
        j += 1
    return a[:i] + b[j:]


def reduce_word(letters: Iterable[int]) -> tuple:
    """Fully reduce a letter sequence (idempotent on reduced words)."""
    out: list[int] = []
    for v in letters:
        if out and out[-1] == -v:
            out.pop()
        else:
            out.append(v)
    return tuple(out)


def multiplier(spec: GroupSpec) -> Callable[[Elem, Elem], Elem]:
    """Product closure without per-call backend dispatch (for hot loops)."""
    if spec.kind == "finite_table":
        table = spec.table
        return lambda a, b: table[a][b]
    if spec.kind == "finite_perm":
        # apply a first, then b: (a*b)(i) = b[a[i]]
        return lambda a, b: tuple(b[v] for v in a)
    if spec.kind == "free_abelian":
        return lambda a, b: tuple(u + v for u, v in zip(a, b))
    if spec.kind == "free_group":
        return _word_mul
    raise WalklabError(f"unknown backend {spec.kind!r}")


def inverter(spec: GroupSpec) -> Callable[[Elem], Elem]:
    if spec.kind == "finite_table":
        inv_t = spec.inverse_table
        return lambda a: inv_t[a]
    if spec.kind == "finite_perm":
        def perm_inv(a):
            out = [0] * len(a)
            for i, v in enumerate(a):
                out[v] = i
            return tuple(out)
        return perm_inv
    if spec.kind == "free_abelian":
        return lambda a: tuple(-v for v in a)
    if spec.kind == "free_group":
        return lambda a: tuple(-v for v in reversed(a))
    raise WalklabError(f"unknown backend {spec.kind!r}")


def mul(spec: GroupSpec, a: Elem, b: Elem) -> Elem:
    check_elem(spec, a)
    check_elem(spec, b)
    return multiplier(spec)(a, b)


def inv(spec: GroupSpec, a: Elem) -> Elem:
    check_elem(spec, a)
    return inverter(spec)(a)


# ---------------------------------------------------------------------------
# parsing / formatting
# ---------------------------------------------------------------------------

_VEC_RE = re.compile(r"\s*\(\s*(-?\d+)(\s*,\s*-?\d+)*\s*\)\s*$")


def parse_elem(spec: GroupSpec, text: str) -> Elem:
    """Parse an element in the backend grammar; free words are canonicalized."""
    if spec.kind == "free_abelian":
        if not _VEC_RE.match(text):
            pos = next((i for i, ch in enumerate(text) if ch not in "0123456789,-() \t"), 0)
            raise ElementParseError("expected a vector like (1,-2)", text, pos)
        parts = text.strip()[1:-1].split(",")
        vec = tuple(int(p) for p in parts)
        if len(vec) != spec.rank:
            raise ElementParseError(f"expected {spec.rank} coordinates, got {len(vec)}", text, 0)
        return vec

    if spec.kind == "free_group":
        letters = []
        for i, ch in enumerate(text):
            if ch.isspace():
                continue
            if "a" <= ch <= "z":
                v = ord(ch) - ord("a") + 1
            elif "A" <= ch <= "Z":
                v = -(ord(ch) - ord("A") + 1)
            else:
                raise ElementParseError("expected letters a-z or A-Z", text, i)
            if abs(v) > spec.rank:
                raise ElementParseError(f"letter {ch!r} exceeds rank {spec.rank}", text, i)
            letters.append(v)
        return reduce_word(letters)

    if spec.kind == "finite_perm":
        stripped = text.strip()
        if not (stripped.startswith("[") and stripped.endswith("]")):
            raise ElementParseError("expected a one-line permutation like [1,0,2]", text, 0)
        try:
            images = tuple(int(p) for p in stripped[1:-1].split(","))
        except ValueError:
            raise ElementParseError("non-integer entry in permutation", text, 1) from None
        if sorted(images) != list(range(spec.degree)):
            raise ElementParseError(f"not a permutation of 0..{spec.degree - 1}", text, 1)
        return images

    if spec.kind == "finite_table":
        try:
            idx = int(text.strip())
        except ValueError:
            raise ElementParseError("expected a decimal table index", text, 0) from None
        if not 0 <= idx < len(spec.table):
            raise ElementParseError(f"index out of range 0..{len(spec.table) - 1}", text, 0)
        return idx

    raise WalklabError(f"unknown backend {spec.kind!r}")


def format_elem(spec: GroupSpec, x: Elem) -> str:
    check_elem(spec, x)
    if spec.kind == "free_abelian":
        return "(" + ",".join(str(v) for v in x) + ")"
    if spec.kind == "free_group":
        return "".join(chr(ord("a") + v - 1) if v > 0 else chr(ord("A") - v - 1) for v in x)
    if spec.kind == "finite_perm":
        return "[" + ",".join(str(v) for v in x) + "]"
    return str(x)


# ---------------------------------------------------------------------------
# exploration
# ---------------------------------------------------------------------------

def ball(spec: GroupSpec, generators: Iterable[Elem], radius: int, cap: int = DEFAULT_CAP) -> set:
    """All products of at most ``radius`` generators, including the identity."""
    if radius < 0:
        raise WalklabError(f"radius must be >= 0, got {radius}")
    gens = sorted(set(generators))
    for g in gens:
        check_elem(spec, g)
    mult = multiplier(spec)
    e = identity(spec)
    seen = {e}
    frontier = [e]
    for r in range(radius):
        nxt = []
        for x in frontier:
            for g in gens:
                y = mult(x, g)
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
                    if len(seen) > cap:
                        raise CapExceededError(
                            f"ball exceeded cap of {cap} elements at radius {r + 1}",
                            n_reached=r,
                            partial=seen,
                        )
        frontier = sorted(nxt)
        if not frontier:
            break
    return seen


# ---------------------------------------------------------------------------
# finite-backend index machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteIndex:
    """Indexed view of a finite group: sorted elements plus numpy product tables."""

    elements: tuple
    index: dict
    table: np.ndarray        # table[i, j] = index of elements[i] * elements[j]
    inverse: np.ndarray
    identity: int

    @property
    def order(self) -> int:
        return len(self.elements)


def _enumerate_perm_group(spec: GroupSpec) -> list[tuple]:
    mult = multiplier(spec)
    e = identity(spec)
    gens = sorted(set(spec.perm_generators))
    seen = {e}
    frontier = [e]
    while frontier:
        nxt = []
        for x in frontier:
            for g in gens:
                y = mult(x, g)
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        frontier = nxt
    return sorted(seen)


@functools.lru_cache(maxsize=32)
def finite_index(spec: GroupSpec) -> FiniteIndex:
    if spec.kind == "finite_table":
        elements = tuple(range(len(spec.table)))
        table = np.array(spec.table, dtype=np.int32)
        inverse = np.array(spec.inverse_table, dtype=np.int32)
        ident = spec.identity_index
        index = {i: i for i in elements}
        return FiniteIndex(elements, index, table, inverse, ident)

    if spec.kind != "finite_perm":
        raise WalklabError(f"finite_index requires a finite backend, got {spec.kind}")

    elements = tuple(_enumerate_perm_group(spec))
    m = len(elements)
    if m > _TABLE_LIMIT:
        raise CapExceededError(f"finite group too large to index ({m} > {_TABLE_LIMIT})")
    index = {x: i for i, x in enumerate(elements)}
    deg = spec.degree
    arr = np.array(elements, dtype=np.int64)          # (m, deg) image rows
    # big-endian positional code preserves the lexicographic element order
    weights = np.array([deg ** (deg - 1 - t) for t in range(deg)], dtype=np.int64)
    codes = arr @ weights                             # sorted, since elements are sorted
    table = np.empty((m, m), dtype=np.int32)
    for i in range(m):
        comp = arr[:, arr[i]] @ weights               # code of elements[i] * elements[j] for all j
        table[i] = np.searchsorted(codes, comp)
    ident = index[identity(spec)]
    inverse = np.empty(m, dtype=np.int32)
    for i in range(m):
        inverse[i] = int(np.flatnonzero(table[i] == ident)[0])
    return FiniteIndex(elements, index, table, inverse, ident)


def group_order(spec: GroupSpec) -> int:
    if not spec.is_finite:
        raise WalklabError("group_order is only defined for finite backends")
    return finite_index(spec).order


def all_elements(spec: GroupSpec) -> tuple:
    """All elements of a finite backend in canonical order."""
    return finite_index(spec).elements
