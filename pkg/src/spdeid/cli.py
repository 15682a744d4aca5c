"""Command-line driver: simulate, identify, oracle, evaluate, detect-noise.

Configuration comes from flags, optionally seeded by a flat
``key=value`` config file (flags override the file).  Exit codes:
0 success, 1 runtime failure (blow-up, I/O), 2 configuration error.
Repetition mode re-seeds each repetition as ``seed + r`` and emits one
CSV row per repetition; the worker count is capped by the
``STOCH_IDENT_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .catalog import MODEL_NAMES, builtin_model, ground_truth_coeffs
from .data import export_csv, read_ensemble, write_ensemble
from .metrics import EvalReport, evaluate_model
from .noise import ADDITIVE
from .pipeline import IdentificationResult, IdentifyOptions, identify_ensemble
from .simulate import BlowUpError, simulate_paths
from .spectral import (identify_diffusion_quadform, identify_drift_linear,
                       mode_pair)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    pass


def _load_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                out[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return out


def _apply_config_defaults(args: argparse.Namespace, parser: argparse.ArgumentParser):
    """File values fill any option still at its parser default."""
    if not getattr(args, "config", None):
        return
    conf = _load_config_file(args.config)
    for key, raw in conf.items():
        if not hasattr(args, key):
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, key) != parser.get_default(key):
            continue  # flag explicitly set; flags win
        default = parser.get_default(key)
        if isinstance(default, bool):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int):
            value = int(raw)
        elif isinstance(default, float):
            value = float(raw)
        else:
            value = raw
        setattr(args, key, value)


def _dict_type(text: str) -> tuple[int, int]:
    try:
        p, q = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected P,Q (e.g. 4,3)") from None
    return p, q


def _atomic_write_text(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-spdeid-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _worker_count(requested: int) -> int:
    cap = os.environ.get("STOCH_IDENT_THREADS")
    if cap:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            raise ConfigError("STOCH_IDENT_THREADS must be an integer") from None
    return max(1, requested)


def _validate_common(args):
    if getattr(args, "paths", 1) < 1:
        raise ConfigError("--paths must be at least 1")
    if getattr(args, "seed", 0) < 0:
        raise ConfigError("--seed must be nonnegative")
    if getattr(args, "upsample", 1) < 1:
        raise ConfigError("--upsample must be at least 1")
    for name in ("drift_dict", "diff_dict"):
        if hasattr(args, name):
            p, q = getattr(args, name)
            if not (0 <= p <= 6 and q >= 1):
                raise ConfigError(f"--{name.replace('_', '-')} orders outside range"
                                  " (p in 0..6, q >= 1)")
    for name in ("trim", "pstar"):
        if hasattr(args, name):
            v = getattr(args, name)
            hi = 1.0
            if not 0 <= v < hi:
                raise ConfigError(f"--{name} must lie in [0, 1)")


def _options_from_args(args) -> IdentifyOptions:
    return IdentifyOptions(
        drift_type=args.drift_dict, diffusion_type=args.diff_dict,
        k_max=args.kmax or None, j_max=args.jmax or None,
        drift_trim=args.trim, diffusion_trim=args.trim, p_star=args.pstar,
    )


def cmd_simulate(args) -> int:
    _validate_common(args)
    model = builtin_model(args.model, fixed_init=args.fixed_init)
    grid = model.default_grid(args.nt or None, args.nx or None)
    ens = simulate_paths(model, grid, args.paths, args.upsample, args.seed)
    write_ensemble(ens, args.out)
    if args.csv:
        export_csv(ens, args.csv)
    print(f"simulated {args.model}: N={ens.num_paths} grid={grid.num_times}x"
          f"{'x'.join(str(m) for m in grid.num_space)} seed={args.seed} -> {args.out}")
    return EXIT_OK


def _report_json(result: IdentificationResult, meta: dict) -> str:
    payload = {"meta": meta, **result.to_dict()}
    return json.dumps(payload, indent=2, sort_keys=True)


def cmd_identify(args) -> int:
    _validate_common(args)
    ens = read_ensemble(args.input)
    diagnostics: list | None = [] if args.diagnostics else None
    result = identify_ensemble(ens, _options_from_args(args), diagnostics)
    meta = {"input": os.path.basename(args.input), "num_paths": ens.num_paths,
            "tool_version": __version__}
    text = _report_json(result, meta)
    if args.out:
        _atomic_write_text(args.out, text)
    else:
        print(text)
    if args.diagnostics:
        lines = [json.dumps(rec, sort_keys=True) for rec in diagnostics]
        _atomic_write_text(args.diagnostics, "\n".join(lines) + "\n")
    for model in result.models:
        print(model.equation(lhs="du" if model.component == 0 else "dv"))
    return EXIT_OK


def cmd_detect_noise(args) -> int:
    _validate_common(args)
    ens = read_ensemble(args.input)
    from .drift import assemble_drift_system, generate_drift_candidates
    from .features import build_dictionary
    from .noise import decide_noise
    from .selection import score_drift

    drift_dict = build_dictionary(*args.drift_dict, space_dims=ens.grid.space_dims,
                                  components=ens.num_components)
    out = []
    for component in range(ens.num_components):
        system = assemble_drift_system(ens, drift_dict, component)
        cands = generate_drift_candidates(system, args.kmax or None, args.trim)
        scored = sorted(((score_drift(ens, drift_dict, c, component), i, c)
                         for i, c in enumerate(cands)),
                        key=lambda t: (t[0], t[2].sparsity, t[1]))
        decision = decide_noise(ens, drift_dict, scored[0][2], args.pstar, component)
        out.append({"component": component, "verdict": decision.verdict,
                    "z_combined": decision.z_combined,
                    "z_critical": decision.z_critical,
                    "sigma_hat": decision.sigma_hat,
                    "degenerate": decision.degenerate})
        print(f"component {component}: {decision.verdict} "
              f"(|Z|={abs(decision.z_combined):.3g}, z*={decision.z_critical:.3g})")
    if args.out:
        _atomic_write_text(args.out, json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_oracle(args) -> int:
    _validate_common(args)
    ens = read_ensemble(args.input)
    table = mode_pair(ens, args.t1_index, args.t2_index, args.max_mode)
    fit = identify_drift_linear(table, args.t1_index, args.t2_index,
                                args.p1, noise=args.noise)
    payload = {"drift_orders": fit.orders.tolist(),
               "drift_coefficients": fit.coefficients.tolist(),
               "modes_used": fit.modes_used.tolist()}
    if args.p2 is not None:
        quad = identify_diffusion_quadform(table, args.t1_index, args.t2_index,
                                           fit.coefficients, args.p2,
                                           noise="multiplicative")
        payload["diffusion_gammas"] = quad.gammas.tolist()
        payload["diffusion_quadform"] = quad.c.tolist()
        payload["diffusion_classes"] = [v.tolist() for v in quad.classes]
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        _atomic_write_text(args.out, text)
    else:
        print(text)
    return EXIT_OK


def _one_repetition(payload) -> tuple[int, list]:
    (rep, model_name, paths, nt, nx, upsample, seed, opts_kw, fixed_init) = payload
    model = builtin_model(model_name, fixed_init=fixed_init)
    grid = model.default_grid(nt or None, nx or None)
    ens = simulate_paths(model, grid, paths, upsample, seed + rep)
    result = identify_ensemble(ens, IdentifyOptions(**opts_kw))
    rows = []
    for component, m in enumerate(result.models):
        drift_truth = ground_truth_coeffs(model_name, result.drift_dictionary,
                                          component, "drift")
        diff_truth = ground_truth_coeffs(model_name, result.diffusion_dictionary,
                                         component, "diffusion")
        report = evaluate_model(m, drift_truth, diff_truth)
        rows.append((component, report))
    return rep, rows


def cmd_evaluate(args) -> int:
    _validate_common(args)
    if args.report:
        return _evaluate_reports(args)
    if not args.model:
        raise ConfigError("need either --report files or --model for repetitions")
    if args.repetitions < 1:
        raise ConfigError("--repetitions must be at least 1")
    opts_kw = dict(drift_type=args.drift_dict, diffusion_type=args.diff_dict,
                   k_max=args.kmax or None, j_max=args.jmax or None,
                   drift_trim=args.trim, diffusion_trim=args.trim,
                   p_star=args.pstar)
    payloads = [(r, args.model, args.paths, args.nt, args.nx, args.upsample,
                 args.seed, opts_kw, args.fixed_init)
                for r in range(args.repetitions)]
    workers = _worker_count(args.workers)
    results: list[tuple[int, list]] = []
    if workers > 1 and len(payloads) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_repetition, payloads))
    else:
        results = [_one_repetition(p) for p in payloads]
    results.sort(key=lambda t: t[0])

    header = ["model", "rep", "seed", "component", *EvalReport.CSV_FIELDS]
    lines = [",".join(header)]
    numeric: dict[str, list[float]] = {}
    for rep, rows in results:
        for component, report in rows:
            row = [args.model, rep, args.seed + rep, component, *report.csv_row()]
            lines.append(",".join(str(v) for v in row))
            for name, value in zip(EvalReport.CSV_FIELDS, report.csv_row()):
                if isinstance(value, float):
                    numeric.setdefault(name, []).append(value)
    _atomic_write_text(args.out, "\n".join(lines) + "\n")
    for name, vals in numeric.items():
        print(f"{name}: mean={np.mean(vals):.4f} std={np.std(vals):.4f}")
    print(f"wrote {len(lines) - 1} rows -> {args.out}")
    return EXIT_OK


def _evaluate_reports(args) -> int:
    if not args.model:
        raise ConfigError("--report evaluation needs --model for the ground truth")
    from .features import build_dictionary
    header = ["report", "component", *EvalReport.CSV_FIELDS]
    lines = [",".join(header)]
    for path in args.report:
        with open(path) as fh:
            payload = json.load(fh)
        ddict = build_dictionary(payload["drift_dictionary"]["p"],
                                 payload["drift_dictionary"]["q"])
        fdict = build_dictionary(payload["diffusion_dictionary"]["p"],
                                 payload["diffusion_dictionary"]["q"])
        from .sparse import SparseCoeffs
        for comp in payload["components"]:
            c = comp["component"]
            est_drift = SparseCoeffs(len(ddict), dict(zip(
                comp["drift"]["support"], comp["drift"]["coefficients"])))
            drift_truth = ground_truth_coeffs(args.model, ddict, c, "drift")
            diff_truth = ground_truth_coeffs(args.model, fdict, c, "diffusion")
            from .metrics import coeff_errors, support_metrics
            sm = support_metrics(est_drift, drift_truth)
            e_in, e_out = coeff_errors(est_drift, drift_truth)
            row: list = [os.path.basename(path), c, sm.precision, sm.accuracy,
                         sm.recall, sm.f1, e_in, e_out]
            if comp["noise_kind"] == ADDITIVE:
                est_diff = SparseCoeffs(len(fdict), {0: comp["sigma_hat"]})
            else:
                est_diff = SparseCoeffs(len(fdict), dict(zip(
                    comp["diffusion"]["support"], comp["diffusion"]["coefficients"])))
            smd = support_metrics(est_diff, diff_truth)
            di, do = coeff_errors(est_diff, diff_truth, sign_invariant=True)
            row += [smd.precision, smd.accuracy, smd.recall, smd.f1, di, do,
                    comp["noise_kind"], comp.get("sigma_hat", "")]
            lines.append(",".join(str(v) for v in row))
    _atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(lines) - 1} rows -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdeid",
        description="Identify stochastic PDE drift/diffusion terms from "
                    "trajectory ensembles, and generate those ensembles.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_sim(p):
        p.add_argument("--model", choices=MODEL_NAMES, required=False)
        p.add_argument("--paths", type=int, default=100)
        p.add_argument("--nt", type=int, default=0,
                       help="observation times (default: model protocol)")
        p.add_argument("--nx", type=int, default=0,
                       help="space points per dimension (default: model protocol)")
        p.add_argument("--upsample", type=int, default=50)
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--fixed-init", action="store_true",
                       help="share one random initial field across paths")

    def add_common_ident(p):
        p.add_argument("--drift-dict", type=_dict_type, default=(4, 3),
                       metavar="P,Q")
        p.add_argument("--diff-dict", type=_dict_type, default=(2, 2),
                       metavar="P,Q")
        p.add_argument("--kmax", type=int, default=0,
                       help="max drift sparsity (default min(K, 10))")
        p.add_argument("--jmax", type=int, default=0,
                       help="max diffusion sparsity (default min(J, 6))")
        p.add_argument("--trim", type=float, default=0.3)
        p.add_argument("--pstar", type=float, default=0.05)

    p = sub.add_parser("simulate", help="generate an ensemble file")
    add_common_sim(p)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also export plain-text CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="identify a model from an ensemble file")
    p.add_argument("--input", required=True)
    add_common_ident(p)
    p.add_argument("--config")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--diagnostics", help="write per-iteration solver log")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("detect-noise", help="drift fit plus noise-type verdict only")
    p.add_argument("--input", required=True)
    add_common_ident(p)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_detect_noise)

    p = sub.add_parser("oracle", help="closed-form identification for linear models")
    p.add_argument("--input", required=True)
    p.add_argument("--t1-index", type=int, default=0)
    p.add_argument("--t2-index", type=int, default=10)
    p.add_argument("--p1", type=int, default=2)
    p.add_argument("--p2", type=int, default=None)
    p.add_argument("--max-mode", type=int, default=10)
    p.add_argument("--noise", choices=("additive", "multiplicative"),
                   default="additive")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("evaluate",
                       help="score reports or run repeated seeded experiments")
    p.add_argument("--report", nargs="*", default=None,
                   help="existing report JSONs to score against --model truth")
    add_common_sim(p)
    add_common_ident(p)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_defaults(args, parser)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
