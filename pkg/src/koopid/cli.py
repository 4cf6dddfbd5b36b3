"""Batch command-line front end.

Three non-interactive subcommands cover the whole pipeline: ``generate``
writes snapshot CSVs from the built-in systems, ``identify`` runs the
forward-backward matching or the subspace decomposition on a snapshot file
and writes a JSON result artifact (plus optional eigenfunction grid CSVs),
and ``verify`` re-checks a stored result against its snapshot data.

Exit codes: 0 success, 1 verification failure, 2 invalid input,
3 rank-assumption violation, 4 I/O error.
"""

import argparse
import json
import pathlib
import sys

import numpy as np

from . import dictionary as dict_mod
from . import edmd, numerics, systems
from .ssd import (
    approximate_ssd,
    eigenfunction_grid,
    lift_eigenvectors,
    reduced_koopman,
    ssd,
    write_grid_csv,
)
from .errors import (
    ArtifactIOError,
    AssumptionViolation,
    EvaluationOverflow,
    InvalidInput,
    KoopidError,
    RankError,
)
from .numerics import ToleranceConfig

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INVALID_INPUT = 2
EXIT_ASSUMPTION_VIOLATION = 3
EXIT_IO_ERROR = 4

_ERROR_CODES = (
    (AssumptionViolation, "assumption-violation", EXIT_ASSUMPTION_VIOLATION),
    (ArtifactIOError, "io-error", EXIT_IO_ERROR),
    (EvaluationOverflow, "overflow", EXIT_INVALID_INPUT),
    (RankError, "rank-error", EXIT_INVALID_INPUT),
    (InvalidInput, "invalid-input", EXIT_INVALID_INPUT),
    (KoopidError, "error", EXIT_INVALID_INPUT),
)


def _fail(exc):
    for cls, label, code in _ERROR_CODES:
        if isinstance(exc, cls):
            print(f"error[{label}]: {exc}", file=sys.stderr)
            return code
    raise exc


def _parse_floats(text, name):
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise InvalidInput(f"cannot parse {name} {text!r}: {exc}") from exc


def _parse_box(text, expected_dim=None):
    values = _parse_floats(text, "--box")
    if len(values) % 2 != 0 or not values:
        raise InvalidInput("--box needs an even number of values: lo1,hi1,lo2,hi2,...")
    box = [(values[i], values[i + 1]) for i in range(0, len(values), 2)]
    if expected_dim is not None and len(box) != expected_dim:
        raise InvalidInput(f"--box must describe {expected_dim} dimensions")
    return box


def _json_matrix(M):
    return None if M is None else [[float(v) for v in row] for row in np.asarray(M)]


# flags whose values may start with a minus sign (e.g. --box -2,2,-2,2);
# joined into --flag=value form so argparse does not mistake them for options
_NUMERIC_LIST_FLAGS = ("--box", "--A", "--grid-box", "--grid-eigenvalues")


def _join_numeric_list_flags(argv):
    out = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if token in _NUMERIC_LIST_FLAGS and i + 1 < len(argv):
            out.append(f"{token}={argv[i + 1]}")
            i += 2
        else:
            out.append(token)
            i += 1
    return out


def _read_config(path):
    try:
        with open(path) as fh:
            defaults = json.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(defaults, dict):
        raise InvalidInput("config file must hold a JSON object")
    return defaults


def _load_config_defaults(argv):
    """Extract --config FILE from argv and return (defaults dict, rest argv)."""
    rest = list(argv)
    for i, token in enumerate(rest):
        if token == "--config":
            if i + 1 >= len(rest):
                raise InvalidInput("--config requires a file argument")
            path = rest[i + 1]
            del rest[i:i + 2]
            return _read_config(path), rest
        if token.startswith("--config="):
            path = token.split("=", 1)[1]
            del rest[i]
            return _read_config(path), rest
    return {}, rest


# defaults applied after merging --config values; explicit flags win over the
# config file, which wins over these
_OPTION_DEFAULTS = {
    "generate": {"substeps": 1, "seed": 0, "out": "snapshots.csv"},
    "identify": {"rank_rtol": 1e-10, "eig_atol": 1e-8, "subspace_atol": 1e-8,
                 "out": "result.json", "grid_resolution": 101,
                 "grid_eigenvalues": "all"},
    "verify": {},
}


def _apply_config_and_defaults(args, config):
    for key, value in config.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise InvalidInput(f"config key {key!r} is not a known option")
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    for dest, value in _OPTION_DEFAULTS[args.command].items():
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    return args


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="koopid",
        description="Identify dictionary functions that evolve linearly in "
                    "time from snapshot data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    # required-ness of the main options is validated in the command handlers
    # so that a --config file can supply any of them
    gen = sub.add_parser("generate", help="generate snapshot data from a built-in system")
    gen.add_argument("--system", choices=["linear", "vanderpol"])
    gen.add_argument("--A", help="row-major entries of the linear map, e.g. 0.8,0.5,-0.5,0.8")
    gen.add_argument("--n", type=int, help="number of snapshot pairs")
    gen.add_argument("--box", help="sampling box lo1,hi1,lo2,hi2,...")
    gen.add_argument("--dt", type=float, help="sampling interval for continuous systems")
    gen.add_argument("--substeps", type=int)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out")

    ident = sub.add_parser("identify", help="run fb-edmd or subspace decomposition on snapshots")
    ident.add_argument("--snapshots")
    ident.add_argument("--degree", type=int, help="monomial dictionary of all monomials up to this degree")
    ident.add_argument("--dict-file", help="JSON dictionary descriptor file")
    ident.add_argument("--method", choices=["fb-edmd", "ssd", "ssd-approx"])
    ident.add_argument("--eps", type=float, help="truncation parameter for ssd-approx")
    ident.add_argument("--rank-rtol", type=float)
    ident.add_argument("--eig-atol", type=float)
    ident.add_argument("--subspace-atol", type=float)
    ident.add_argument("--out")
    ident.add_argument("--grid-box", help="export eigenfunction grids over this box")
    ident.add_argument("--grid-resolution", type=int)
    ident.add_argument("--grid-eigenvalues",
                       help="'all' or comma-separated complex values, e.g. 0.8+0.5j")
    ident.add_argument("--out-dir", help="directory for grid CSVs (default: beside --out)")

    ver = sub.add_parser("verify", help="re-check a stored result against snapshot data")
    ver.add_argument("result", help="result JSON written by identify")
    ver.add_argument("snapshots", help="snapshot CSV the result was computed from")
    return parser


def cmd_generate(args):
    if args.system is None or args.n is None or args.box is None:
        raise InvalidInput("generate requires --system, --n and --box")
    box = _parse_box(args.box)
    if args.n < 1:
        raise InvalidInput("--n must be at least 1")
    if args.system == "linear":
        if args.A is None:
            raise InvalidInput("--system linear requires --A")
        entries = _parse_floats(args.A, "--A")
        n = len(box)
        if len(entries) != n * n:
            raise InvalidInput(f"--A needs {n * n} entries for a {n}-dimensional box")
        A = np.array(entries).reshape(n, n)
        spec = systems.SystemSpec.discrete_linear(A, box, seed=args.seed)
    else:
        if args.dt is None:
            raise InvalidInput(f"--system {args.system} requires --dt")
        spec = systems.SystemSpec.continuous(args.system, args.dt, box,
                                             seed=args.seed, substeps=args.substeps)
    snapshots = systems.generate(spec, args.n)
    path = systems.write_snapshot_csv(snapshots, args.out)
    print(f"wrote {snapshots.count} snapshot pairs to {path}")
    return EXIT_OK


def _load_dictionary(args, state_dim):
    if (args.degree is None) == (args.dict_file is None):
        raise InvalidInput("exactly one of --degree and --dict-file is required")
    if args.degree is not None:
        if args.degree < 0:
            raise InvalidInput("--degree must be nonnegative")
        return dict_mod.monomials_up_to_degree(state_dim, args.degree)
    try:
        with open(args.dict_file) as fh:
            descriptor = json.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read dictionary file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"dictionary file is not valid JSON: {exc}") from exc
    dictionary = dict_mod.dictionary_from_descriptor(descriptor)
    if dictionary.state_dim != state_dim:
        raise InvalidInput(
            f"dictionary state dim {dictionary.state_dim} does not match "
            f"snapshot state dim {state_dim}"
        )
    return dictionary


def _evolution_dict(ev):
    return {
        "lambda_re": float(ev.eigenvalue.real),
        "lambda_im": float(ev.eigenvalue.imag),
        "coefficients_re": [float(v) for v in ev.coefficients.real],
        "coefficients_im": [float(v) for v in ev.coefficients.imag],
        "forward_defect": float(ev.forward_defect),
        "backward_defect": float(ev.backward_defect),
        "data_defect": float(ev.data_defect),
    }


def _ssd_dict(result):
    return {
        "mode": result.mode,
        "epsilon": result.epsilon,
        "iterations": result.iterations,
        "subspace_dim": result.subspace_dim,
        "C": _json_matrix(result.C),
        "max_range_angle": result.max_range_angle,
        "log": [
            {
                "subspace_dim": it.subspace_dim,
                "null_dim": it.null_dim,
                "action": it.action,
                "kept_rank": it.kept_rank,
                "truncation_ratio": it.truncation_ratio,
                "exact_fallback": it.exact_fallback,
            }
            for it in result.log
        ],
    }


def _select_grid_evolutions(evolutions, selector):
    if selector.strip().lower() == "all":
        return list(range(len(evolutions)))
    chosen = []
    for token in selector.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            target = complex(token)
        except ValueError as exc:
            raise InvalidInput(f"cannot parse eigenvalue {token!r}") from exc
        hits = [i for i, ev in enumerate(evolutions)
                if abs(ev.eigenvalue - target) <= 1e-6 * (1.0 + abs(target))]
        if not hits:
            raise InvalidInput(f"no identified evolution has eigenvalue near {token}")
        chosen.extend(h for h in hits if h not in chosen)
    return chosen


def cmd_identify(args):
    if args.snapshots is None or args.method is None:
        raise InvalidInput("identify requires --snapshots and --method")
    if args.method not in ("fb-edmd", "ssd", "ssd-approx"):
        raise InvalidInput(f"unknown method {args.method!r}")
    snapshots = systems.read_snapshot_csv(args.snapshots)
    dictionary = _load_dictionary(args, snapshots.state_dim)
    tol = ToleranceConfig(rank_rtol=args.rank_rtol, eig_match_atol=args.eig_atol,
                          subspace_atol=args.subspace_atol)
    if args.method == "ssd-approx" and args.eps is None:
        raise InvalidInput("--method ssd-approx requires --eps")
    if args.method != "ssd-approx" and args.eps is not None:
        raise InvalidInput("--eps is only valid with --method ssd-approx")

    DX = dict_mod.evaluate(dictionary, snapshots.X)
    DY = dict_mod.evaluate(dictionary, snapshots.Y)

    result = {
        "method": args.method,
        "tolerances": {
            "rank_rtol": tol.rank_rtol,
            "eig_match_atol": tol.eig_match_atol,
            "subspace_atol": tol.subspace_atol,
        },
        "snapshots": {
            "path": str(args.snapshots),
            "count": snapshots.count,
            "state_dim": snapshots.state_dim,
        },
        "dictionary": dictionary.descriptor(),
        "ssd": None,
        "reduced_koopman": None,
        "e_r": None,
        "evolutions": [],
        "grids": [],
    }

    if args.method == "fb-edmd":
        evolutions = edmd.forward_backward_eigenpairs(DX, DY, tol)
        k_f = edmd.edmd_matrix(DX, DY, tol)
        result["e_r"] = edmd.relative_residual(DX, DY, k_f.matrix)
    else:
        if args.method == "ssd":
            decomposition = ssd(DX, DY, tol)
        else:
            decomposition = approximate_ssd(DX, DY, args.eps, tol)
        result["ssd"] = _ssd_dict(decomposition)
        evolutions = []
        if not decomposition.is_zero:
            reduced = reduced_koopman(DX, DY, decomposition, tol,
                                          dictionary=dictionary)
            result["reduced_koopman"] = _json_matrix(reduced.matrix)
            result["e_r"] = reduced.e_r
            evolutions = lift_eigenvectors(DX, DY, decomposition, reduced, tol)
    result["evolutions"] = [_evolution_dict(ev) for ev in evolutions]

    out_path = pathlib.Path(args.out)
    if args.grid_box is not None and evolutions:
        grid_box = _parse_box(args.grid_box, expected_dim=snapshots.state_dim)
        grid_dir = pathlib.Path(args.out_dir) if args.out_dir else out_path.parent
        grid_dir.mkdir(parents=True, exist_ok=True)
        for idx in _select_grid_evolutions(evolutions, args.grid_eigenvalues):
            ev = evolutions[idx]
            grid = eigenfunction_grid(dictionary, ev.coefficients, grid_box,
                                          args.grid_resolution)
            grid_path = grid_dir / f"eigenfunction_{idx:03d}.csv"
            write_grid_csv(grid, grid_path)
            result["grids"].append({
                "file": grid_path.name,
                "lambda_re": float(ev.eigenvalue.real),
                "lambda_im": float(ev.eigenvalue.imag),
                "resolution": int(args.grid_resolution),
            })

    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write result file: {exc}") from exc
    print(f"identified {len(evolutions)} linear evolution(s); wrote {out_path}")
    return EXIT_OK


def cmd_verify(args):
    try:
        with open(args.result) as fh:
            stored = json.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read result file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"result file is not valid JSON: {exc}") from exc

    snapshots = systems.read_snapshot_csv(args.snapshots)
    try:
        dictionary = dict_mod.dictionary_from_descriptor(stored["dictionary"])
        tolerances = stored["tolerances"]
        tol = ToleranceConfig(rank_rtol=tolerances["rank_rtol"],
                              eig_match_atol=tolerances["eig_match_atol"],
                              subspace_atol=tolerances["subspace_atol"])
    except (KeyError, TypeError) as exc:
        raise InvalidInput(f"result file is missing required fields: {exc}") from exc
    if dictionary.state_dim != snapshots.state_dim:
        raise InvalidInput("result dictionary does not match the snapshot state dim")

    DX = dict_mod.evaluate(dictionary, snapshots.X)
    DY = dict_mod.evaluate(dictionary, snapshots.Y)

    checks = []

    evolutions = stored.get("evolutions", [])
    worst = 0.0
    all_ok = True
    for entry in evolutions:
        lam = complex(entry["lambda_re"], entry["lambda_im"])
        v = np.array(entry["coefficients_re"]) + 1j * np.array(entry["coefficients_im"])
        if v.size != dictionary.size:
            raise InvalidInput("stored coefficients do not match the dictionary size")
        _, defect = edmd.check_linear_evolution(DX, DY, v, lam, tol)
        stored_defect = float(entry["data_defect"])
        bound = max(tol.eig_match_atol, 2.0 * stored_defect + 1e-15)
        worst = max(worst, defect)
        all_ok = all_ok and defect <= bound
    if evolutions:
        checks.append((f"data defects ({len(evolutions)} evolutions, worst {worst:.3e})",
                       all_ok))

    ssd_block = stored.get("ssd")
    if ssd_block and ssd_block.get("C") is not None:
        C = np.array(ssd_block["C"], dtype=float)
        if C.shape[0] != dictionary.size:
            raise InvalidInput("stored C does not match the dictionary size")
        full_rank = numerics.numerical_rank(C, tol) == C.shape[1]
        checks.append(("C has full column rank", full_rank))
        angles = numerics.principal_angles(DX @ C, DY @ C, tol)
        max_angle = float(angles.max()) if angles.size else 0.0
        if ssd_block["mode"] == "exact":
            checks.append((
                f"range equality of DX@C and DY@C (max angle {max_angle:.3e})",
                numerics.subspace_equal(DX @ C, DY @ C, tol),
            ))
        else:
            stored_angle = float(ssd_block.get("max_range_angle") or 0.0)
            checks.append((
                f"range angles consistent with artifact (max angle {max_angle:.3e})",
                max_angle <= 2.0 * stored_angle + 1e-9,
            ))

    if stored.get("e_r") is not None and stored.get("reduced_koopman") is not None \
            and ssd_block and ssd_block.get("C") is not None:
        K = np.array(stored["reduced_koopman"], dtype=float)
        C = np.array(ssd_block["C"], dtype=float)
        e_r = edmd.relative_residual(DX @ C, DY @ C, K)
        stored_er = float(stored["e_r"])
        checks.append((
            f"reduced residual e_r reproducible ({e_r:.3e} vs stored {stored_er:.3e})",
            abs(e_r - stored_er) <= 1e-9 * (1.0 + stored_er),
        ))

    if not checks:
        checks.append(("artifact contains no checkable claims", False))

    failed = 0
    for name, ok in checks:
        print(f"verify: {name}: {'pass' if ok else 'FAIL'}")
        failed += 0 if ok else 1
    if failed:
        print(f"verification failed: {failed} of {len(checks)} checks", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    print(f"verification passed: {len(checks)} checks")
    return EXIT_OK


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config_defaults, argv = _load_config_defaults(argv)
        argv = _join_numeric_list_flags(argv)
        parser = _build_parser()
        args = _apply_config_and_defaults(parser.parse_args(argv),
                                          config_defaults)
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "identify":
            return cmd_identify(args)
        return cmd_verify(args)
    except KoopidError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
