"""Command-line front end: load a group/measure config, run one analysis,
emit JSON + CSV reports.

Exit codes: 0 success, 1 invalid input, 2 certified non-irreducible input,
3 numeric or cap failure.  Reports embed the fully resolved config and name
the quantity they contain, and identical configs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .errors import (
    CapExceededError,
    ConvergenceError,
    ElementParseError,
    InsufficientDataError,
    LabelConflictError,
    MeasureError,
    StabilizationError,
    WalklabError,
)
from .groups import (
    GroupSpec,
    all_elements,
    ball,
    finite_perm,
    finite_table,
    format_elem,
    free_abelian,
    free_group,
    identity,
    inverter,
    parse_elem,
)
from .measures import SparseMeasure, irreducibility_check, measure
from .periodicity import compute_period, coset_labeling, gamma0_by_union, verify_proposition
from .ratio_limit import (
    bernoulli_tail_check,
    build_h_process,
    conv_residual,
    constant_harmonic,
    exponential_harmonic,
    generic_chain_ratio,
    h_process_diag,
    harmonic_from_values,
    limit_measure,
    minimal_exponential_harmonic,
    ratio_series,
)
from .spectral import check_gerl_strict, check_supermultiplicativity, estimate_spectral, return_sequence, root_lower_bounds

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_IRREDUCIBLE = 2
EXIT_NUMERIC = 3

_BASE_KEYS = {
    "group", "measure", "out_dir", "weight_mode", "prune_threshold",
    "n_max", "irreducibility_horizon",
}
_COMMAND_KEYS = {
    "period": {"k_max", "ball_radius"},
    "spectral": {"method"},
    "ratio": {"x", "window_radius"},
    "limit-measure": {"window_radius"},
    "hprocess": {"h", "domain_radius", "k0"},
    "bernoulli": {"a", "epsilon", "n_start", "n_stop", "n_step"},
    "chain": {"matrix"},
}
_NEEDS_MEASURE = {"period", "spectral", "ratio", "limit-measure", "hprocess"}


class ConfigError(WalklabError):
    pass


def _require(config: dict, key: str):
    if key not in config:
        raise ConfigError(f"config is missing required key {key!r}")
    return config[key]


def _check_keys(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def load_group(obj: dict) -> GroupSpec:
    kind = _require(obj, "kind")
    if kind == "free_abelian":
        _check_keys(obj, {"kind", "rank"}, "group")
        return free_abelian(int(_require(obj, "rank")))
    if kind == "free_group":
        _check_keys(obj, {"kind", "rank"}, "group")
        return free_group(int(_require(obj, "rank")))
    if kind == "finite_perm":
        _check_keys(obj, {"kind", "degree", "generators"}, "group")
        return finite_perm(int(_require(obj, "degree")), _require(obj, "generators"))
    if kind == "finite_table":
        _check_keys(obj, {"kind", "table"}, "group")
        return finite_table(_require(obj, "table"))
    raise ConfigError(f"unknown group kind {kind!r}")


def load_measure(spec: GroupSpec, entries: list, weight_mode: str | None) -> SparseMeasure:
    weights = {}
    saw_rational = False
    for entry in entries:
        _check_keys(entry, {"elem", "prob"}, "measure entry")
        elem = parse_elem(spec, str(_require(entry, "elem")))
        prob = _require(entry, "prob")
        if isinstance(prob, str) and "/" in prob:
            saw_rational = True
        if elem in weights:
            raise ConfigError(f"duplicate measure entry for {entry['elem']!r}")
        weights[elem] = Fraction(str(prob))
    if saw_rational and weight_mode == "float":
        raise ConfigError("rational weight strings force exact mode; drop weight_mode=float")
    exact = saw_rational or weight_mode == "exact"
    if exact:
        return measure(spec, weights, exact=True)
    return measure(spec, {x: float(w) for x, w in weights.items()}, exact=False)


def _elem_key(spec: GroupSpec, x) -> str:
    return format_elem(spec, x)


def _weight_json(w):
    if isinstance(w, Fraction):
        return f"{w.numerator}/{w.denominator}"
    return w


def _json_default(obj):
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n")


def write_csv(path: Path, quantity: str, columns: list[str], rows: list) -> None:
    header = json.dumps({"quantity": quantity, "columns": columns}, sort_keys=True)
    lines = ["# " + header, ",".join(columns)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _resolved_config(config: dict, command: str) -> dict:
    out = {"command": command, "version": __version__}
    out.update(config)
    return out


def _explored_domain(spec: GroupSpec, m: SparseMeasure, radius: int) -> list:
    if spec.is_finite:
        return list(all_elements(spec))
    return sorted(ball(spec, m.support, radius))


def _sequence_measure(m: SparseMeasure, n_max: int) -> SparseMeasure:
    # exact-rational sequences are the default up to n_max = 64; beyond that
    # denominators grow exponentially, so long horizons run in float
    if m.exact and n_max > 64:
        return m.as_float()
    return m


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_period(spec, m, config, out: Path) -> int:
    n_max = int(config.get("n_max", 64))
    radius = int(config.get("ball_radius", 8))
    report = compute_period(m, n_max=n_max)
    domain = _explored_domain(spec, m, radius)
    partition = coset_labeling(m, report.d, domain)
    verification = verify_proposition(m, report, partition)
    gamma0_union_matches = None
    if spec.is_finite:
        k_max = config.get("k_max")
        union = gamma0_by_union(m, k_max=int(k_max) if k_max is not None else None)
        gamma0_union_matches = union == partition.gamma0

    payload = {
        "quantity": "period_coset_structure",
        "config": _resolved_config(config, "period"),
        "d": report.d,
        "return_times": list(report.return_times),
        "n0": report.n0,
        "certification": report.certification,
        "horizon": report.horizon,
        "quotient_generator_order": partition.quotient_generator_order,
        "gamma0_size_in_domain": len(partition.gamma0),
        "gamma0_union_matches": gamma0_union_matches,
        "verification": {
            "scope": verification.scope,
            "ok": verification.ok,
            "checks": [dataclasses.asdict(c) for c in verification.checks],
        },
    }
    write_json(out / "period_report.json", payload)
    write_json(out / "coset_partition.json", {
        "quantity": "coset_partition",
        "config": _resolved_config(config, "period"),
        "d": partition.d,
        "labels": {_elem_key(spec, x): l for x, l in sorted(partition.labels.items())},
        "gamma0": [_elem_key(spec, x) for x in sorted(partition.gamma0)],
    })
    write_csv(out / "coset_labels.csv", "coset_labels", ["element", "label"],
              [(f'"{_elem_key(spec, x)}"', l) for x, l in sorted(partition.labels.items())])
    status = "ok" if verification.ok else "verification FAILED"
    print(f"period d={report.d} ({report.certification}), |Gamma0 in domain|={len(partition.gamma0)}, {status}")
    return EXIT_OK if verification.ok else EXIT_NUMERIC


def cmd_spectral(spec, m, config, out: Path) -> int:
    n_max = int(config.get("n_max", 2000))
    method = config.get("method", "auto")
    ms = _sequence_measure(m, n_max)
    est = estimate_spectral(ms, n_max, method=method)
    a = return_sequence(ms, n_max)
    supermult = check_supermultiplicativity(a)
    gerl = None
    if est.method in ("laplace_exact", "stochastic_exact"):
        try:
            gerl = check_gerl_strict(ms, est.rho_hat, n_max)
        except WalklabError:
            gerl = None

    payload = {
        "quantity": "spectral_radius",
        "config": _resolved_config(config, "spectral"),
        "rho_hat": est.rho_hat,
        "method": est.method,
        "k0": gerl.k0 if gerl else None,
        "diagnostics": est.diagnostics,
        "supermultiplicativity": {"ok": supermult.ok, "pairs_checked": supermult.pairs_checked},
        "gerl_strict": dataclasses.asdict(gerl) if gerl else None,
        "lower_bound_count": len(est.lower_bounds),
    }
    write_json(out / "spectral_estimate.json", payload)

    bounds = dict(est.lower_bounds)
    ratio_at = {}
    stride = est.diagnostics.get("stride", 1)
    for n in range(1, n_max + 1 - stride):
        an, anext = a[n - 1], a[n + stride - 1]
        if an and anext:
            ratio_at[n] = float(anext) / float(an) if not ms.exact else float(Fraction(anext) / Fraction(an))
    rows = []
    for n in range(1, n_max + 1):
        rows.append((
            n,
            repr(float(a[n - 1])),
            repr(bounds[n]) if n in bounds else "",
            repr(ratio_at[n]) if n in ratio_at else "",
            repr(est.rho_hat),
        ))
    write_csv(out / "spectral_sequence.csv", "return_sequence",
              ["n", "a_n", "root_bound", "ratio", "extrapolated"], rows)
    print(f"rho_hat={est.rho_hat!r} method={est.method} supermult_ok={supermult.ok}")
    return EXIT_OK if supermult.ok else EXIT_NUMERIC


def cmd_ratio(spec, m, config, out: Path) -> int:
    n_max = int(config.get("n_max", 2000))
    x = parse_elem(spec, str(config.get("x", format_elem(spec, identity(spec)))))
    window = None
    if "window_radius" in config:
        window = _explored_domain(spec, m, int(config["window_radius"]))
    report = ratio_series(_sequence_measure(m, n_max), x, n_max, window=window)
    payload = {
        "quantity": "ratio_limit",
        "config": _resolved_config(config, "ratio"),
        "x": _elem_key(spec, x),
        "stride": report.stride,
        "extrapolated_limit": report.extrapolated_limit,
        "diagnostics": report.diagnostics,
        "normalized_snapshots": [
            {"n": n, "values": {_elem_key(spec, w): v for w, v in sorted(vals.items())}}
            for n, vals in report.nu_n
        ],
    }
    write_json(out / "ratio_report.json", payload)
    write_csv(out / "ratio_series.csv", "ratio_series", ["n", "ratio"],
              [(n, repr(r)) for n, r in report.ratios])
    print(f"ratio limit at x={_elem_key(spec, x)}: {report.extrapolated_limit!r} (stride {report.stride})")
    return EXIT_OK


def cmd_limit_measure(spec, m, config, out: Path) -> int:
    n_max = int(config.get("n_max", 2000))
    radius = int(config.get("window_radius", 10))
    window = _explored_domain(spec, m, radius + 1)
    est = limit_measure(_sequence_measure(m, n_max), window, n_max)
    if spec.kind == "free_abelian" and m.is_probability:
        from .spectral import laplace_min

        rho = laplace_min(m)
        rho_method = "laplace_exact"
    else:
        rho = estimate_spectral(m, n_max).rho_hat
        rho_method = "estimated"
    inner = [z for z in _explored_domain(spec, m, radius) if z in est.values]
    residual = conv_residual(m, est.values, rho, inner)
    payload = {
        "quantity": "limit_measure",
        "config": _resolved_config(config, "limit-measure"),
        "values": {_elem_key(spec, x): v for x, v in sorted(est.values.items())},
        "n_used": list(est.n_used),
        "rho_used": rho,
        "rho_method": rho_method,
        "conv_residual": residual,
    }
    write_json(out / "limit_measure.json", payload)
    write_csv(out / "limit_measure.csv", "limit_measure", ["element", "value"],
              [(f'"{_elem_key(spec, x)}"', repr(v)) for x, v in sorted(est.values.items())])
    print(f"limit measure on {len(est.values)} elements; conv residual {residual!r} at rho={rho!r}")
    return EXIT_OK


def _load_harmonic(spec, m, config):
    obj = dict(config.get("h", {"kind": "minimal"}))
    kind = obj.pop("kind", "minimal")
    sub = bool(obj.pop("subharmonic", False))
    hkind = "subharmonic" if sub else "harmonic"
    if kind == "minimal":
        _check_keys(obj, set(), "h")
        return minimal_exponential_harmonic(m)
    if kind == "exponential":
        base2 = [Fraction(str(b)) for b in obj.pop("base2")]
        rho = obj.pop("rho", None)
        _check_keys(obj, set(), "h")
        return exponential_harmonic(m, base2, rho=float(rho) if rho is not None else None, kind=hkind)
    if kind == "constant":
        rho = obj.pop("rho", 1.0)
        _check_keys(obj, set(), "h")
        domain = all_elements(spec) if spec.is_finite else None
        if domain is None:
            raise ConfigError("constant h requires a finite backend")
        return constant_harmonic(spec, domain, rho=Fraction(str(rho)) if m.exact else float(rho))
    if kind == "values":
        rho = obj.pop("rho")
        values = {parse_elem(spec, str(k)): Fraction(str(v)) for k, v in obj.pop("values").items()}
        _check_keys(obj, set(), "h")
        if not m.exact:
            values = {k: float(v) for k, v in values.items()}
            rho = float(rho)
        else:
            rho = Fraction(str(rho))
        return harmonic_from_values(spec, values, rho, kind=hkind)
    raise ConfigError(f"unknown h kind {kind!r}")


def cmd_hprocess(spec, m, config, out: Path) -> int:
    n_max = int(config.get("n_max", 500))
    radius = int(config.get("domain_radius", 6))
    h = _load_harmonic(spec, m, config)
    domain = _explored_domain(spec, m, radius)
    hp = build_h_process(m, h, domain)
    k0 = config.get("k0")
    diag = h_process_diag(hp, n_max, k0=int(k0) if k0 is not None else None)
    payload = {
        "quantity": "h_process",
        "config": _resolved_config(config, "hprocess"),
        "rho": hp.rho,
        "rho_exact": _weight_json(hp.rho_exact) if hp.rho_exact is not None else None,
        "rho2_exact": _weight_json(hp.rho2_exact) if hp.rho2_exact is not None else None,
        "translation_invariant": hp.translation_invariant,
        "rows": {
            _elem_key(spec, x): [[_elem_key(spec, y), _weight_json(w)] for y, w in row.sorted_items()]
            for x, row in sorted(hp.rows.items())
        },
        "diag_cross_max_rel": diag.cross_max_rel,
        "diag_root_tail": [[n, v] for n, v in diag.root_tail],
        "diag_strict_ok": diag.strict_ok,
    }
    write_json(out / "hprocess.json", payload)
    write_csv(out / "hprocess_diag.csv", "h_process_diagonal", ["n", "p_h_n_ee"],
              [(n, repr(v)) for n, v in diag.values])
    print(f"h-process on {len(hp.rows)} states, rho={hp.rho!r}, "
          f"diag cross-check max rel err: {diag.cross_max_rel!r}")
    return EXIT_OK


def cmd_bernoulli(config, out: Path) -> int:
    a = float(_require(config, "a"))
    eps = float(_require(config, "epsilon"))
    n_start = int(config.get("n_start", 50))
    n_stop = int(config.get("n_stop", 500))
    n_step = int(config.get("n_step", 10))
    check = bernoulli_tail_check(a, eps, range(n_start, n_stop + 1, n_step))
    payload = {
        "quantity": "bernoulli_tail",
        "config": _resolved_config(config, "bernoulli"),
        "a": check.a,
        "epsilon": check.epsilon,
        "fitted_delta": check.fitted_delta,
        "fitted_intercept": check.fitted_intercept,
        "fitted_delta_lower": check.fitted_delta_d,
        "fitted_intercept_lower": check.fitted_intercept_d,
        "envelope_ok": check.envelope_ok,
    }
    write_json(out / "bernoulli_check.json", payload)
    rows = []
    for (n, t_c), (_, t_d) in zip(check.tail_values, check.d_tail_values):
        bound_c = math.exp(-check.fitted_delta * n + check.fitted_intercept) \
            if math.isfinite(check.fitted_delta) else 0.0
        bound_d = math.exp(-check.fitted_delta_d * n + check.fitted_intercept_d) \
            if math.isfinite(check.fitted_delta_d) else 0.0
        rows.append((n, repr(t_c), repr(bound_c), repr(t_d), repr(bound_d)))
    write_csv(out / "bernoulli_tails.csv", "bernoulli_tails",
              ["n", "tail", "bound", "tail_lower", "bound_lower"], rows)
    print(f"tail decay delta={check.fitted_delta!r} (lower {check.fitted_delta_d!r}), "
          f"envelope_ok={check.envelope_ok}")
    return EXIT_OK if check.fitted_delta > 0 and check.envelope_ok else EXIT_NUMERIC


def cmd_chain(config, out: Path) -> int:
    matrix = _require(config, "matrix")
    n_max = int(config.get("n_max", 2000))
    report = generic_chain_ratio(matrix, n_max)
    payload = {
        "quantity": "chain_ratio_limit",
        "config": _resolved_config(config, "chain"),
        "n_states": report.n_states,
        "ratio_limit": report.ratio_limit,
        "eigenvalue": report.eigenvalue,
        "gap": abs(report.ratio_limit - report.eigenvalue),
        "entry_spread": report.entry_spread,
        "aperiodicity_witness": list(report.aperiodicity_witness),
    }
    write_json(out / "chain_report.json", payload)
    write_csv(out / "chain_ratios.csv", "chain_ratios", ["n", "ratio"],
              [(n, repr(r)) for n, r in report.history])
    print(f"ratio limit {report.ratio_limit!r} vs eigenvalue {report.eigenvalue!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="walklab",
        description="Structural and asymptotic analysis of random walks on groups.",
    )
    parser.add_argument("command", choices=sorted(_COMMAND_KEYS))
    parser.add_argument("--config", required=True, help="path to a JSON run config")
    parser.add_argument("--nmax", type=int, default=None, help="override n_max")
    parser.add_argument("--exact", action="store_true", help="force exact rational weights")
    parser.add_argument("--out", default=None, help="output directory (default ./walklab_out)")
    return parser


def run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    command = args.command

    try:
        config = json.loads(Path(args.config).read_text())
        if not isinstance(config, dict):
            raise ConfigError("config root must be a JSON object")
        _check_keys(config, _BASE_KEYS | _COMMAND_KEYS[command], "config")
        if args.nmax is not None:
            config["n_max"] = args.nmax
        if args.exact:
            config["weight_mode"] = "exact"
        if args.out is not None:
            config["out_dir"] = args.out

        spec = m = None
        if command in _NEEDS_MEASURE:
            spec = load_group(_require(config, "group"))
            m = load_measure(spec, _require(config, "measure"), config.get("weight_mode"))
    except (ConfigError, ElementParseError, MeasureError, WalklabError,
            json.JSONDecodeError, FileNotFoundError, KeyError, TypeError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID

    out = Path(config.get("out_dir", "walklab_out"))
    out.mkdir(parents=True, exist_ok=True)

    try:
        if m is not None:
            irr = irreducibility_check(m, horizon=int(config.get("irreducibility_horizon", 8)))
            if irr.status == "certified_no":
                print(f"measure is certifiably not irreducible: {irr.reason}", file=sys.stderr)
                return EXIT_NOT_IRREDUCIBLE
            if irr.status == "unknown":
                print(f"irreducibility not certified ({irr.reason}); proceeding", file=sys.stderr)

        if command == "period":
            return cmd_period(spec, m, config, out)
        if command == "spectral":
            return cmd_spectral(spec, m, config, out)
        if command == "ratio":
            return cmd_ratio(spec, m, config, out)
        if command == "limit-measure":
            return cmd_limit_measure(spec, m, config, out)
        if command == "hprocess":
            return cmd_hprocess(spec, m, config, out)
        if command == "bernoulli":
            return cmd_bernoulli(config, out)
        if command == "chain":
            return cmd_chain(config, out)
        raise WalklabError(f"unhandled command {command!r}")
    except (CapExceededError, ConvergenceError, StabilizationError,
            InsufficientDataError, LabelConflictError) as exc:
        print(f"numeric/cap failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except WalklabError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
