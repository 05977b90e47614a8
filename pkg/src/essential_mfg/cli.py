"""``mfg-essential`` command line.

Every command prints a table to standard output and can write a JSON report
(``--out``). ``--format json`` prints the JSON instead. Reports validate
against ``schemas/report.schema.json``.

Exit codes: 0 success, 1 criterion not met, 2 input error, 3 enumeration cap
exceeded, 4 empty result.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import jsonschema
import numpy as np

from . import essentiality as ess
from .equilibrium import EquilibriumSet, find_all_equilibria
from .fixtures import FIXTURES, fixture_text
from .io import ModelFormatError, load_model, load_schema
from .mdp import DEFAULT_CAP, CapExceeded, monte_carlo_value, value_of_strategy
from .model import ModelError, check_distribution, default_metric_resolution, deterministic_matrix, game_distance, validate
from .probing import DEFAULT_DELTAS, PROBE_SEARCH, FamilySpec, ensemble_genericity_study, probe
from .stationary import DEFAULT_TOL

EXIT_OK, EXIT_CRITERION, EXIT_INPUT, EXIT_CAP, EXIT_EMPTY = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover
        return "0+unknown"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _read_model(path: str):
    """Model file path, or ``ref:NAME`` for a bundled fixture."""
    try:
        if path.startswith("ref:"):
            text = fixture_text(path[4:])
        else:
            text = Path(path).read_text()
    except (OSError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    try:
        return load_model(text, check_generator=False)
    except (ModelFormatError, ModelError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _bounded(kind, lo=None, hi=None, strict_lo=False):
    def parse(text):
        try:
            x = kind(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"invalid {kind.__name__}: {text!r}") from exc
        if lo is not None and (x <= lo if strict_lo else x < lo):
            raise argparse.ArgumentTypeError(f"{text} is below the allowed range")
        if hi is not None and x > hi:
            raise argparse.ArgumentTypeError(f"{text} is above the allowed range")
        return x

    return parse


def _fmt(x, digits=6) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.{digits}g}"
    return str(x)


def _table(headers, rows) -> str:
    cells = [[str(h) for h in headers]] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(headers))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# --- commands: each returns (exit_code, result dict, human text) ---


def cmd_validate(args):
    model = _read_model(args.model)
    rep = validate(model, args.grid)
    lines = [f"model: {args.model}", f"grid resolution {rep.grid_resolution} ({rep.grid_points} points)"]
    lines += [f"FAIL {f}" for f in rep.failures] or ["PASS generator and discount checks"]
    return (EXIT_OK if rep.passed else EXIT_CRITERION), rep.to_json(), "\n".join(lines)


def _search_kwargs(args):
    return {
        "grid_resolution": args.grid,
        "mixed_grid_resolution": args.mixed_grid,
        "tol": args.tol,
        "cap": args.cap,
        "max_extra": args.max_extra,
    }


def _eq_rows(eqset):
    rows = []
    for k, e in enumerate(eqset, 1):
        pi = "; ".join(",".join(f"{p:.4g}" for p in row) for row in e.pi)
        rows.append([k, e.kind, ", ".join(f"{x:.6f}" for x in e.m), pi, e.diagnostics.value_gap])
    return _table(["#", "kind", "m", "pi (rows per state)", "value gap"], rows)


def _equilibria_text(eqset) -> str:
    text = [_eq_rows(eqset)] if len(eqset) else ["no equilibria found"]
    text += [f"warning: {w}" for w in eqset.warnings]
    return "\n".join(text)


def cmd_equilibria(args):
    model = _read_model(args.model)
    eqset = find_all_equilibria(model, **_search_kwargs(args), warn=False)
    code = EXIT_OK if len(eqset) else EXIT_EMPTY
    text = _equilibria_text(eqset)
    if not len(eqset):
        text += "\nhint: refine --grid / --mixed-grid"
    return code, eqset.to_json(), text


def cmd_essential(args):
    model = _read_model(args.model)
    eqset = find_all_equilibria(model, **_search_kwargs(args), warn=False)
    if not len(eqset):
        return EXIT_EMPTY, {"equilibria": eqset.to_json(), "constants": None, "reports": []}, "no equilibria found"
    reports = ess.classify(model, eqset, args.epsilon, args.grid, args.cap)
    if args.samples > 0:
        opts = {**PROBE_SEARCH, "tol": args.tol, "cap": args.cap}
        for r in reports:
            r.probe = probe(model, r.equilibrium, args.deltas, args.samples, args.seed, opts)
    constants = None
    if any(e.kind == "deterministic" for e in eqset):
        constants = ess.perturbation_constants(model, cap=args.cap).to_json()
    rows = []
    for k, r in enumerate(reports, 1):
        final = r.probe.rows[-1].max_displacement if r.probe and r.probe.rows else None
        rows.append(
            [k, r.equilibrium.kind, r.status, r.unique_criterion.status, r.characterization_criterion.status, r.certified_radius, final]
        )
    text = _equilibria_text(eqset) + "\n\n"
    text += _table(["#", "kind", "status", "unique", "characterization", "certified delta", "probe max @ smallest delta"], rows)
    for k, r in enumerate(reports, 1):
        text += f"\n#{k}: {r.characterization_criterion.reason}"
    code = EXIT_OK if all(r.status == "essential-certified" for r in reports) else EXIT_CRITERION
    result = {"equilibria": eqset.to_json(), "constants": constants, "reports": [r.to_json() for r in reports]}
    return code, result, text


def _profile_text(profile) -> str:
    rows = [[r.delta, r.samples, r.max_displacement, r.mean_displacement, r.failures] for r in profile.rows]
    body = _table(["delta", "samples", "max displacement", "mean displacement", "failures"], rows) if rows else "no samples"
    return body + "\n" + profile.note


def cmd_probe(args):
    model = _read_model(args.model)
    eqset = find_all_equilibria(model, **_search_kwargs(args), warn=False)
    if not len(eqset):
        return EXIT_EMPTY, {}, "no equilibria found"
    if not 1 <= args.equilibrium <= len(eqset):
        raise InputError(f"--equilibrium must be between 1 and {len(eqset)}")
    eq = eqset[args.equilibrium - 1]
    opts = {**PROBE_SEARCH, "tol": args.tol, "cap": args.cap}
    profile = probe(model, eq, args.deltas, args.samples, args.seed, opts)
    text = _eq_rows(EquilibriumSet([eq])) + "\n\n" + _profile_text(profile)
    return EXIT_OK, {"equilibrium": eq.to_json(), "profile": profile.to_json()}, text


def _read_family(path: str | None) -> FamilySpec:
    if path is None:
        return FamilySpec()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(str(exc)) from exc
    try:
        jsonschema.validate(doc, load_schema("family"))
        return FamilySpec.from_dict(doc)
    except (jsonschema.ValidationError, ValueError) as exc:
        raise InputError(f"family spec: {getattr(exc, 'message', exc)}") from exc


def cmd_ensemble(args):
    family = _read_family(args.family)
    injected = [(p, _read_model(p)) for p in args.inject]
    opts = {**PROBE_SEARCH, "tol": args.tol, "cap": args.cap}
    rep = ensemble_genericity_study(
        family, args.count, args.seed, args.deltas, args.samples, args.threshold, injected, opts
    )
    rows = [[g.label, g.states, g.actions, g.equilibria, g.final_max_displacement, g.corroborated] for g in rep.games]
    rows += [[g.label, g.states, g.actions, g.equilibria, g.final_max_displacement, g.corroborated] for g in rep.injected]
    text = _table(["game", "S", "A", "equilibria", "max displacement @ smallest delta", "corroborated"], rows)
    text += f"\ncorroborated fraction: {_fmt(rep.corroborated_fraction)}"
    if rep.injected:
        text += f"\ninjected fixtures flagged: {sum(rep.injected_flagged)}/{len(rep.injected)}"
    return EXIT_OK, rep.to_json(), text + "\n" + rep.note


def cmd_distance(args):
    a, b = _read_model(args.model), _read_model(args.other)
    try:
        d = game_distance(a, b, args.grid)
    except ModelError as exc:
        raise InputError(str(exc)) from exc
    grid = args.grid or default_metric_resolution(a.S)
    return EXIT_OK, {"distance": d, "grid_resolution": grid}, f"game distance: {d:.12g} (grid resolution {grid})"


def cmd_mc_check(args):
    model = _read_model(args.model)
    try:
        d = np.asarray(args.strategy) - 1
        pi = deterministic_matrix(d, model.A)
        m = check_distribution(args.m if args.m is not None else np.full(model.S, 1.0 / model.S), model.S)
    except (ValueError, IndexError) as exc:
        raise InputError(str(exc)) from exc
    V = value_of_strategy(model, pi, m)
    est = monte_carlo_value(model, pi, m, horizon=args.horizon, paths=args.paths, seed=args.seed)
    diff = np.abs(est.mean - V)
    ok = diff <= 3 * est.stderr + est.truncation_bound + 1e-12
    rows = [[i + 1, V[i], est.mean[i], est.stderr[i], diff[i], bool(ok[i])] for i in range(model.S)]
    text = _table(["state", "linear solve", "monte carlo", "std error", "|diff|", "within 3 SE + trunc"], rows)
    result = {"linear_solve": V, "monte_carlo": est.to_json(), "within_tolerance": ok.tolist()}
    return (EXIT_OK if ok.all() else EXIT_CRITERION), result, text


def cmd_fixtures(args):
    if args.export:
        out = Path(args.export)
        out.mkdir(parents=True, exist_ok=True)
        for name in FIXTURES:
            (out / f"{name}.json").write_text(fixture_text(name))
    lines = [f"{name}: {json.loads(fixture_text(name)).get('description', '')}" for name in FIXTURES]
    return EXIT_OK, None, "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfg-essential", description="Stationary equilibria of finite mean field games and their robustness.")
    p.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, search=True):
        sp.add_argument("--out", help="write the JSON report to this path")
        sp.add_argument("--format", choices=["json", "table"], default="table")
        if search:
            sp.add_argument("--grid", type=_bounded(int, 2, 200), help="seed grid resolution for the equilibrium search")
            sp.add_argument("--mixed-grid", type=_bounded(int, 2, 200), help="seed grid resolution for mixed supports")
            sp.add_argument("--tol", type=_bounded(float, 0, 1e-2, strict_lo=True), default=DEFAULT_TOL)
            sp.add_argument("--cap", type=_bounded(int, 1, 10**6), default=DEFAULT_CAP, help="max deterministic strategies enumerated")
            sp.add_argument("--max-extra", type=_bounded(int, 0, 16), default=4, help="max extra supported actions in mixed supports")

    def probe_opts(sp, samples):
        sp.add_argument("--deltas", type=_float_list, default=list(DEFAULT_DELTAS), help="comma-separated decreasing radii")
        sp.add_argument("--samples", type=_bounded(int, 0, 100000), default=samples)
        sp.add_argument("--seed", type=_bounded(int, 0), default=0)

    sp = sub.add_parser("validate", help="check generator and discount conditions")
    sp.add_argument("model")
    common(sp, search=False)
    sp.add_argument("--grid", type=_bounded(int, 1, 500))
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("equilibria", help="find all stationary equilibria")
    sp.add_argument("model")
    common(sp)
    sp.set_defaults(func=cmd_equilibria)

    sp = sub.add_parser("essential", help="classify equilibria with the sufficient criteria")
    sp.add_argument("model")
    common(sp)
    sp.add_argument("--epsilon", type=_bounded(float, 0, 1, strict_lo=True), default=ess.DEFAULT_EPSILON)
    probe_opts(sp, samples=0)
    sp.set_defaults(func=cmd_essential)

    sp = sub.add_parser("probe", help="sample perturbed games around one equilibrium")
    sp.add_argument("model")
    common(sp)
    sp.add_argument("--equilibrium", type=_bounded(int, 1), default=1, help="1-based index into the equilibrium list")
    probe_opts(sp, samples=20)
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("ensemble", help="genericity study over random affine games")
    sp.add_argument("family", nargs="?", help="family spec JSON (defaults: 2 states, 1-2 actions)")
    common(sp, search=False)
    sp.add_argument("--count", type=_bounded(int, 0, 10000), default=10)
    sp.add_argument("--threshold", type=_bounded(float, 0, strict_lo=True), default=0.05)
    sp.add_argument("--inject", action="append", default=[], help="model probed alongside the ensemble (repeatable)")
    sp.add_argument("--tol", type=_bounded(float, 0, 1e-2, strict_lo=True), default=DEFAULT_TOL)
    sp.add_argument("--cap", type=_bounded(int, 1, 10**6), default=DEFAULT_CAP)
    probe_opts(sp, samples=5)
    sp.set_defaults(func=cmd_ensemble, deltas=[1e-2, 1e-3])

    sp = sub.add_parser("distance", help="grid sup-norm distance between two games")
    sp.add_argument("model")
    sp.add_argument("other")
    common(sp, search=False)
    sp.add_argument("--grid", type=_bounded(int, 1, 500))
    sp.set_defaults(func=cmd_distance)

    sp = sub.add_parser("mc-check", help="compare the linear-solve value with Monte Carlo")
    sp.add_argument("model")
    common(sp, search=False)
    sp.add_argument("--strategy", type=_int_list, required=True, help="1-based action per state, e.g. 1,2")
    sp.add_argument("--m", type=_float_list, help="population distribution (default uniform)")
    sp.add_argument("--horizon", type=_bounded(float, 0, strict_lo=True))
    sp.add_argument("--paths", type=_bounded(int, 2, 10**8), default=100_000)
    sp.add_argument("--seed", type=_bounded(int, 0), default=0)
    sp.set_defaults(func=cmd_mc_check)

    sp = sub.add_parser("fixtures", help="list (or export) the bundled reference games")
    sp.add_argument("--export", metavar="DIR")
    sp.set_defaults(func=cmd_fixtures, format="table", out=None)
    return p


def _options(args) -> dict:
    skip = {"func", "command", "out", "format", "model", "other", "family"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "deltas", None) is not None:
        try:
            args.deltas = [float(x) for x in args.deltas]
            if not args.deltas or any(x <= 0 for x in args.deltas) or any(b >= a for a, b in zip(args.deltas, args.deltas[1:])):
                raise ValueError
        except ValueError:
            parser.error("--deltas must be positive and strictly decreasing")
    try:
        code, result, text = args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    if result is None:
        print(text)
        return code
    report = _clean(
        {
            "command": args.command,
            "version": _version(),
            "model": getattr(args, "model", None) or getattr(args, "family", None),
            "options": _options(args),
            "exit_code": code,
            "result": result,
        }
    )
    jsonschema.validate(report, load_schema("report"))
    payload = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(payload)
    sys.stdout.write(payload if args.format == "json" else text + "\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
