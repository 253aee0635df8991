"""Command-line entry point: one config-driven command per run.

Commands: model, simulate, green, eisenbaum, variational, ldp, regimes,
verify-all.  Every run writes a manifest (config hash, version, seed, wall
time) next to its artifacts; CSV floats carry 12 significant digits so reruns
with the same seed are byte-identical.  Seed and worker count can be
overridden by SILTLAB_SEED / SILTLAB_WORKERS or the corresponding flags
(flag wins over environment wins over config).
"""

from __future__ import annotations

import argparse
import filecmp
import json
import math
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .io_utils import sha256_of_doc, write_csv, write_json

_BASE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command", "seed", "params"],
    "properties": {
        "command": {"enum": ["model", "simulate", "green", "eisenbaum",
                             "variational", "ldp", "regimes", "verify-all"]},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "params": {"type": "object"},
    },
}

_MODEL_PROPS = {
    "d": {"type": "integer", "minimum": 1},
    "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 2},
    "q": {"type": "number", "exclusiveMinimum": 1},
    "K": {"type": "integer", "minimum": 2},
}

_PARAM_SCHEMAS = {
    "model": {
        "type": "object", "additionalProperties": False,
        "required": ["d", "alpha", "q", "K"],
        "properties": {**_MODEL_PROPS,
                       "R": {"type": "integer", "minimum": 2},
                       "fold_method": {"enum": ["fold", "exact"]}},
    },
    "simulate": {
        "type": "object", "additionalProperties": False,
        "required": ["d", "alpha", "q", "K", "R", "n", "stop"],
        "properties": {**_MODEL_PROPS,
                       "R": {"type": "integer", "minimum": 2},
                       "n": {"type": "integer", "minimum": 1},
                       "stop": {
                           "type": "object", "additionalProperties": False,
                           "required": ["kind"],
                           "properties": {"kind": {"enum": ["fixed", "exponential"]},
                                          "T": {"type": "number", "exclusiveMinimum": 0},
                                          "rate": {"type": "number", "exclusiveMinimum": 0}},
                       },
                       "with_mutual": {"type": "boolean"}},
    },
    "green": {
        "type": "object", "additionalProperties": False,
        "required": ["d", "alpha", "q", "K", "R", "lam"],
        "properties": {**_MODEL_PROPS,
                       "R": {"type": "integer", "minimum": 2},
                       "lam": {"type": "number", "exclusiveMinimum": 0},
                       "lemma_checks": {"type": "boolean"}},
    },
    "eisenbaum": {
        "type": "object", "additionalProperties": False,
        "required": ["d", "alpha", "q", "K", "R", "lam", "s_values", "n"],
        "properties": {**_MODEL_PROPS,
                       "R": {"type": "integer", "minimum": 2},
                       "lam": {"type": "number", "exclusiveMinimum": 0},
                       "s_values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                       "n": {"type": "integer", "minimum": 100}},
    },
    "variational": {
        "type": "object", "additionalProperties": False,
        "required": ["d", "alpha", "q", "K", "problem"],
        "properties": {**_MODEL_PROPS,
                       "problem": {"enum": ["kappa", "rho", "rho1", "duality", "m_scaling"]},
                       "L": {"type": "integer", "minimum": 1},
                       "L_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                       "R": {"type": "integer", "minimum": 2},
                       "lam": {"type": "number", "exclusiveMinimum": 0},
                       "y_grid": {"type": "array", "items": {"type": "number"}}},
    },
    "ldp": {
        "type": "object", "additionalProperties": False,
        "required": ["d", "alpha", "q", "K", "R", "n", "schedules", "method"],
        "properties": {**_MODEL_PROPS,
                       "R": {"type": "integer", "minimum": 2},
                       "n": {"type": "integer", "minimum": 1000},
                       "method": {"enum": ["naive", "tilted"]},
                       "R_ball": {"type": "number", "minimum": 1},
                       "L_for_constants": {"type": "integer", "minimum": 4},
                       "schedules": {
                           "type": "array", "minItems": 1,
                           "items": {"type": "object", "additionalProperties": False,
                                     "required": ["T", "b_T"],
                                     "properties": {"T": {"type": "number", "exclusiveMinimum": 0},
                                                    "b_T": {"type": "number", "exclusiveMinimum": 0},
                                                    "a": {"type": "number", "exclusiveMinimum": 0}}}},
                       },
    },
    "regimes": {
        "type": "object", "additionalProperties": False,
        "required": ["cases"],
        "properties": {"cases": {
            "type": "array", "minItems": 1,
            "items": {"type": "object", "additionalProperties": False,
                      "required": ["d", "alpha", "q"],
                      "properties": {**{k: v for k, v in _MODEL_PROPS.items() if k != "K"},
                                     "T": {"type": "number", "exclusiveMinimum": 0},
                                     "b_T": {"type": "number", "exclusiveMinimum": 0}}}}},
    },
    "verify-all": {
        "type": "object", "additionalProperties": False,
        "properties": {"profile": {"enum": ["full", "quick"]}},
    },
}


class ConfigError(ValueError):
    pass


def validate_config(config: dict) -> None:
    """Schema-check the whole document; report every violation at once."""
    import jsonschema

    errors = []
    v = jsonschema.Draft202012Validator(_BASE_SCHEMA)
    errors.extend(f"config{_path(e)}: {e.message}" for e in v.iter_errors(config))
    cmd = config.get("command")
    if cmd in _PARAM_SCHEMAS and isinstance(config.get("params"), dict):
        vp = jsonschema.Draft202012Validator(_PARAM_SCHEMAS[cmd])
        errors.extend(f"params{_path(e)}: {e.message}" for e in vp.iter_errors(config["params"]))
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))


def _path(err) -> str:
    return "".join(f"[{p!r}]" for p in err.absolute_path)


def _build(params):
    from .model import ModelParams, build_jump_law

    mp = ModelParams(params["d"], params["alpha"], params["q"])
    return build_jump_law(mp, params["K"])


def _build_torus(params, R=None, method="fold"):
    from .model import project_to_torus

    law = _build(params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return project_to_torus(law, R or params["R"], method=method)


# ---------------------------------------------------------------------------
# command implementations (each returns a list of written files)
# ---------------------------------------------------------------------------

def cmd_model(params, seed, outdir, workers):
    law = _build(params)
    doc = law.as_dict()
    files = [write_json(os.path.join(outdir, "model.json"), doc)]
    if "R" in params:
        torus = _build_torus(params, method=params.get("fold_method", "fold"))
        doc.update(torus.as_dict())
        files[0] = write_json(os.path.join(outdir, "model.json"), doc)
        ks = np.indices(torus.symbol.shape).reshape(torus.d, -1).T
        rows = [list(k) + [torus.symbol[tuple(k)]] for k in ks]
        files.append(write_csv(os.path.join(outdir, "symbol.csv"),
                               [f"k{i}" for i in range(torus.d)] + ["psi_R"], rows))
    return files


def cmd_simulate(params, seed, outdir, workers):
    from .walk import ExponentialHorizon, FixedHorizon, batch_local_time_matrix

    torus = _build_torus(params)
    stop_cfg = params["stop"]
    if stop_cfg["kind"] == "fixed":
        if "T" not in stop_cfg:
            raise ConfigError("fixed stop needs T")
        stop = FixedHorizon(stop_cfg["T"])
    else:
        if "rate" not in stop_cfg:
            raise ConfigError("exponential stop needs rate")
        stop = ExponentialHorizon(stop_cfg["rate"])
    n, q = params["n"], params["q"]
    occ, horizons, n_jumps = batch_local_time_matrix(torus, stop, n, seed)
    I = (occ ** q).sum(axis=1)
    n_sites = (occ > 0).sum(axis=1)
    q_int = int(round(q))
    with_mutual = params.get("with_mutual", False) and q_int == q and q_int >= 2
    Q = None
    if with_mutual:
        fields = [occ]
        for i in range(1, q_int):
            occ_i, _, _ = batch_local_time_matrix(torus, stop, n, (seed, i))
            fields.append(occ_i)
        prod = np.ones_like(occ)
        for f in fields:
            prod = prod * f
        Q = prod.sum(axis=1)
    header = ["replica", "horizon", "n_jumps", "n_sites", "I_T", "Q_T"]
    rows = [[i, horizons[i], int(n_jumps[i]), int(n_sites[i]), I[i],
             (Q[i] if Q is not None else None)] for i in range(n)]
    return [write_csv(os.path.join(outdir, "replicas.csv"), header, rows)]


def cmd_green(params, seed, outdir, workers):
    from .green import check_green_lemmas, check_heat_kernel_bound, green_torus

    torus = _build_torus(params)
    g = green_torus(torus, params["lam"])
    ks = np.indices(g.values.shape).reshape(torus.d, -1).T
    rows = [list(k) + [g.values[tuple(k)]] for k in ks]
    files = [write_csv(os.path.join(outdir, "green_torus.csv"),
                       [f"x{i}" for i in range(torus.d)] + ["G"], rows)]
    if params.get("lemma_checks", False):
        law = _build(params)
        rep = check_green_lemmas(law)
        hb = check_heat_kernel_bound(law)
        files.append(write_json(os.path.join(outdir, "lemma_report.json"), {
            "R_grid": rep.R_grid, "lambda_grid": rep.lam_grid,
            "wrap_constants": rep.C_values, "wrap_spread": rep.C_spread,
            "zero_gaps": rep.zero_gaps, "free_zero": rep.free_zero,
            "free_zero_discrepancy": rep.free_zero_discrepancy,
            "lower_bound_margin": rep.lower_bound_margin,
            "heat_bound": {"C_star": hb.C_star, "C_star_refined": hb.C_star_refined,
                           "diag_band": [hb.diag_ratio_min, hb.diag_ratio_max]},
        }))
    return files


def cmd_eisenbaum(params, seed, outdir, workers):
    from .gaussian import eisenbaum_test

    torus = _build_torus(params)
    out = {"R": params["R"], "lam": params["lam"], "n": params["n"], "tests": []}
    rows_csv = []
    for i, s in enumerate(params["s_values"]):
        rep = eisenbaum_test(torus, params["lam"], s, params["n"], (seed, i),
                             q_for_battery=params["q"], workers=workers)
        out["tests"].append({
            "s": s, "max_abs_z": rep.max_abs_z(), "passed": rep.passed(),
            "weight_mean": rep.weight_mean, "weight_se": rep.weight_se,
            "coord_closed_form": rep.coord_closed_form,
            "rows": [{"functional": r.name, "left_mean": r.left_mean, "left_se": r.left_se,
                      "right_mean": r.right_mean, "right_se": r.right_se, "z": r.z}
                     for r in rep.rows],
        })
        for r in rep.rows:
            rows_csv.append([s, r.name, r.left_mean, r.left_se, r.right_mean, r.right_se, r.z])
    files = [
        write_json(os.path.join(outdir, "eisenbaum_report.json"), out),
        write_csv(os.path.join(outdir, "eisenbaum_rows.csv"),
                  ["s", "functional", "left_mean", "left_se", "right_mean", "right_se", "z"],
                  rows_csv),
    ]
    return files


def cmd_variational(params, seed, outdir, workers):
    from .green import green_torus
    from .variational import (check_duality, check_m_scaling, solve_kappa,
                              solve_rho, solve_rho1)

    law = _build(params)
    problem = params["problem"]
    files = []
    if problem in ("kappa", "rho"):
        L = params["L"]
        solver = solve_kappa if problem == "kappa" else solve_rho
        res = solver(law, params["q"], L, seed=seed, keep_trace=True)
        files.append(_emit_variational(outdir, problem, res))
    elif problem == "rho1":
        torus = _build_torus(params)
        kernel = green_torus(torus, params["lam"])
        res = solve_rho1(kernel, params["q"], seed=seed, keep_trace=True)
        files.append(_emit_variational(outdir, problem, res))
    elif problem == "duality":
        rep = check_duality(law, params["q"], params["L_grid"], seed=seed)
        files.append(write_json(os.path.join(outdir, "duality.json"), {
            "L_grid": rep.L_grid, "kappa": rep.kappa_values, "rho": rep.rho_values,
            "products": rep.products, "tolerance_used": rep.tolerance_used,
            "widened": rep.widened, "trend_monotone": rep.trend_monotone,
            "constructive": {"quotients": list(rep.constructive.quotients),
                             "bound": rep.constructive.bound,
                             "slack": rep.constructive.slack,
                             "holder_gap": rep.constructive.holder_gap,
                             "passed": rep.constructive.passed},
            "passed": rep.passed,
        }))
    else:
        rep = check_m_scaling(law, params["q"], params["L"],
                              y_grid=tuple(params.get("y_grid", (0.25, 0.5, 1.0))), seed=seed)
        files.append(write_json(os.path.join(outdir, "m_scaling.json"), {
            "kappa": rep.kappa, "y_grid": rep.y_grid, "inf_values": rep.inf_values,
            "rel_errors": rep.rel_errors, "kappa1_monotone": rep.kappa1_monotone,
            "passed": rep.passed,
        }))
    return files


def _emit_variational(outdir, problem, res):
    opt_path = os.path.join(outdir, f"{problem}_optimizer.csv")
    sites = res.optimizer.sites()
    flat = res.optimizer.flat()
    write_csv(opt_path, [f"x{i}" for i in range(sites.shape[1])] + ["value"],
              [list(s) + [v] for s, v in zip(sites, flat)])
    trace_path = os.path.join(outdir, f"{problem}_trace.csv")
    write_csv(trace_path, ["iteration", "objective", "residual"], res.trace)
    return write_json(os.path.join(outdir, f"{problem}.json"), {
        "problem": problem, "domain": res.domain, "value": res.value,
        "residual": res.residual, "constraint_residual": res.constraint_residual,
        "iterations": res.iterations, "converged": res.converged,
        "method": res.method, "start_values": res.start_values,
        "optimizer_csv_path": os.path.basename(opt_path),
        "trace_csv_path": os.path.basename(trace_path),
    })


def cmd_ldp(params, seed, outdir, workers):
    from .ldp import DeviationSchedule, rate_curve
    from .variational import solve_kappa, solve_rho

    law = _build(params)
    torus = _build_torus(params)
    schedules = [DeviationSchedule(T=s["T"], b_T=s["b_T"], q=params["q"], a=s.get("a", 1.0))
                 for s in params["schedules"]]
    L = params.get("L_for_constants", 48 if params["d"] == 1 else 14)
    kappa = solve_kappa(law, params["q"], L, seed=seed).value
    rho = solve_rho(law, params["q"], L, seed=seed).value
    rep = rate_curve(torus, schedules, params["n"], seed, kappa=kappa, rho=rho,
                     method=params["method"], R_ball=params.get("R_ball", 4.0))
    rows = [[r["T"], r["b_T"], r["threshold"], r["p_hat"], r["se"], r["log_rate"],
             r["method"], r["window_ok"]] for r in rep.rows]
    files = [
        write_csv(os.path.join(outdir, "rate_curve.csv"),
                  ["T", "b_T", "threshold", "p_hat", "se", "log_rate", "method", "window_ok"],
                  rows),
        write_json(os.path.join(outdir, "ldp_summary.json"), {
            "kappa": kappa, "rho": rho, "analytic_lines": rep.analytic_lines,
            "all_negative": rep.all_negative,
            "monotone_in_threshold": rep.monotone_in_threshold,
            "within_band": rep.within_band, "passed": rep.passed,
            "n": params["n"], "method": params["method"],
        }),
    ]
    return files


def cmd_regimes(params, seed, outdir, workers):
    from .ldp import classify_regime
    from .model import ModelParams

    docs, rows = [], []
    for case in params["cases"]:
        rep = classify_regime(ModelParams(case["d"], case["alpha"], case["q"]),
                              T=case.get("T"), b_T=case.get("b_T"))
        docs.append(rep.as_dict())
        for R, cost in rep.cost_curve:
            rows.append([case["d"], case["alpha"], case["q"], R, cost])
    return [
        write_json(os.path.join(outdir, "regimes.json"), {"cases": docs}),
        write_csv(os.path.join(outdir, "cost_curves.csv"),
                  ["d", "alpha", "q", "R", "cost"], rows),
    ]


# ---------------------------------------------------------------------------
# verify-all
# ---------------------------------------------------------------------------

_DETERMINISM_PIPELINE = [
    ("model", {"d": 1, "alpha": 0.5, "q": 2.0, "K": 2000, "R": 16}),
    ("green", {"d": 1, "alpha": 0.5, "q": 2.0, "K": 2000, "R": 16, "lam": 0.5}),
    ("simulate", {"d": 1, "alpha": 0.5, "q": 2.0, "K": 2000, "R": 16, "n": 2000,
                  "stop": {"kind": "fixed", "T": 50.0}, "with_mutual": True}),
    ("variational", {"d": 1, "alpha": 0.5, "q": 2.0, "K": 2000, "problem": "rho1",
                     "R": 8, "lam": 0.5}),
    ("ldp", {"d": 1, "alpha": 0.5, "q": 2.0, "K": 2000, "R": 16, "n": 5000,
             "method": "tilted", "R_ball": 4, "L_for_constants": 8,
             "schedules": [{"T": 50.0, "b_T": 12.0}, {"T": 50.0, "b_T": 14.0}]}),
    ("eisenbaum", {"d": 1, "alpha": 0.5, "q": 2.0, "K": 2000, "R": 8, "lam": 0.5,
                   "s_values": [1.0], "n": 5000}),
    ("regimes", {"cases": [{"d": 1, "alpha": 0.5, "q": 2.0},
                           {"d": 3, "alpha": 2.0, "q": 2.0, "T": 1e4, "b_T": 1e2}]}),
]


def emit_artifact_pipeline(outdir, seed, workers=1):
    """Run every artifact-emitting command once on compact inputs."""
    written = []
    for cmd, params in _DETERMINISM_PIPELINE:
        sub = os.path.join(outdir, cmd.replace("-", "_"))
        os.makedirs(sub, exist_ok=True)
        written.extend(_COMMANDS[cmd](params, seed, sub, workers))
    return written


def determinism_check(outdir, seed, workers=1):
    """Criterion 15: the pipeline run twice with one seed emits identical bytes."""
    run_a = os.path.join(outdir, "determinism_run1")
    run_b = os.path.join(outdir, "determinism_run2")
    files_a = emit_artifact_pipeline(run_a, seed, workers)
    files_b = emit_artifact_pipeline(run_b, seed, workers)
    mismatches = []
    for fa, fb in zip(files_a, files_b):
        if not filecmp.cmp(fa, fb, shallow=False):
            mismatches.append(os.path.relpath(fa, run_a))
    return mismatches, len(files_a)


def cmd_verify_all(params, seed, outdir, workers):
    from .acceptance import CriterionResult, Scale, run_criteria

    profile = params.get("profile", "full")
    scale = Scale() if profile == "full" else Scale.quick()
    results = run_criteria(scale, echo=None)
    mism, nfiles = determinism_check(outdir, seed, workers)
    results.append(CriterionResult(
        15, "byte-identical artifacts on rerun",
        not mism,
        f"{nfiles} artifacts compared across two seeded runs; mismatches: {mism or 'none'}",
        {"n_files": nfiles, "mismatches": mism},
    ))
    for res in results:
        print(res.line())
    n_fail = sum(not r.passed for r in results)
    table = [{"number": r.number, "name": r.name, "passed": r.passed, "detail": r.detail}
             for r in results]
    write_json(os.path.join(outdir, "acceptance_report.json"),
               {"profile": profile, "n_failed": n_fail, "criteria": table})
    if n_fail:
        raise SystemExit(f"verify-all: {n_fail} criteria failed")
    return [os.path.join(outdir, "acceptance_report.json")]


_COMMANDS = {
    "model": cmd_model,
    "simulate": cmd_simulate,
    "green": cmd_green,
    "eisenbaum": cmd_eisenbaum,
    "variational": cmd_variational,
    "ldp": cmd_ldp,
    "regimes": cmd_regimes,
    "verify-all": cmd_verify_all,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="siltlab",
        description="Numerical laboratory for self-intersection local times of "
                    "heavy-tailed lattice walks.")
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--workers", type=int, default=None, help="worker threads")
    parser.add_argument("--out", help="output directory (default: config output_dir or '.')")
    args = parser.parse_args(argv)

    with open(args.config) as fh:
        config = json.load(fh)
    try:
        validate_config(config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2

    seed = config["seed"]
    if os.environ.get("SILTLAB_SEED"):
        seed = int(os.environ["SILTLAB_SEED"])
    if args.seed is not None:
        seed = args.seed
    workers = 1
    if os.environ.get("SILTLAB_WORKERS"):
        workers = int(os.environ["SILTLAB_WORKERS"])
    if args.workers is not None:
        workers = args.workers
    outdir = args.out or config.get("output_dir") or "."
    os.makedirs(outdir, exist_ok=True)

    t0 = time.time()
    command = config["command"]
    try:
        files = _COMMANDS[command](config["params"], seed, outdir, workers)
    except SystemExit as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ValueError, NotImplementedError) as exc:
        print(f"{command}: {exc}", file=sys.stderr)
        return 2
    manifest = {
        "command": command,
        "config_sha256": sha256_of_doc(config),
        "version": __version__,
        "seed": seed,
        "workers": workers,
        "wall_time_s": time.time() - t0,
        "outputs": [os.path.relpath(f, outdir) for f in files],
    }
    write_json(os.path.join(outdir, "manifest.json"), manifest)
    print(f"{command}: wrote {len(files)} artifact(s) to {outdir} "
          f"in {manifest['wall_time_s']:.1f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
