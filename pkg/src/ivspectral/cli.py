"""``ivspectral`` command-line front end.

    ivspectral simulate --config scenario.toml --out report.json [--seed N] [--workers W]
    ivspectral estimate --config est.toml --data sample.csv --out report.json
    ivspectral diagnose --config diag.toml --data sample.csv --out report.json

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical/rank
error. Failures print one JSON error record on stderr.

Tikhonov ``alpha`` acts on eigenvalues of ``Z'Z`` (not ``Z'Z/N``), so a fixed
alpha means more shrinkage at small N; ``grid_scale = "relative"`` expresses
grids in units of ``lambda_max**2`` instead.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import diagnostics as diag
from . import dataio as ivio
from .config import RunConfig, parse_config, run_config_to_dict, to_plain
from .errors import ConfigurationError, DataError, IVSpectralError, ParameterError
from .montecarlo import ReplicationStats, run_estimator, run_scenario

log = logging.getLogger("ivspectral")


def _report(cfg: RunConfig, results, diagnostics, seed) -> dict:
    return {
        "config": run_config_to_dict(cfg, include_output=False),
        "results": results,
        "diagnostics": diagnostics,
        "version": __version__,
        "seed": seed,
    }


def _preamble(report: dict) -> dict:
    return {"version": report["version"], "seed": report["seed"], "config": report["config"]}


# --------------------------------------------------------------------------
# estimate
# --------------------------------------------------------------------------


def estimate_report(cfg: RunConfig) -> dict:
    data = ivio.read_dataset_csv(cfg.input_path)
    results = []
    for spec in cfg.estimators:
        res = run_estimator(spec, data)
        results.append(
            {
                "label": spec.label,
                "method": res.method,
                "delta_hat": res.delta_hat,
                "scheme": to_plain(res.scheme) if res.scheme is not None else None,
                "first_stage_fitted": res.first_stage_fitted,
                "diagnostics": res.diagnostics,
            }
        )
    return _report(cfg, results, {}, None)


def _estimate_csv(report: dict) -> str:
    rows = []
    for res in report["results"]:
        scheme = json.dumps(ivio.jsonable(res["scheme"])) if res["scheme"] else ""
        for j, value in enumerate(res["delta_hat"]):
            rows.append(
                [
                    res["label"],
                    res["method"],
                    j,
                    float(value),
                    float(res["diagnostics"].get("condition_number", np.nan)),
                    float(res["diagnostics"].get("effective_dof", np.nan)),
                    scheme,
                ]
            )
    header = ["label", "method", "coordinate", "delta_hat", "condition_number", "effective_dof", "scheme"]
    return ivio.dumps_csv(header, rows, _preamble(report))


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def stats_to_dict(stats: ReplicationStats) -> dict:
    cells = []
    for cell in stats.cells:
        s = cell.stats
        cells.append(
            {
                "n": cell.n,
                "label": cell.label,
                "method": cell.method,
                "replications": s.replications,
                "failure_count": s.failure_count,
                "mean_bias": s.mean_bias,
                "median_bias": s.median_bias,
                "mad": s.mad,
                "mse": s.mse,
                "decile_range": s.decile_range,
            }
        )
    return {"delta_true": list(stats.delta_true), "cells": cells}


def simulate_report(cfg: RunConfig, workers: int = 1) -> dict:
    stats = run_scenario(cfg.scenario, workers=workers)
    return _report(cfg, stats_to_dict(stats), {}, cfg.scenario.master_seed)


_STAT_FIELDS = ("mean_bias", "median_bias", "mad", "mse", "decile_range")


def _simulate_csv(report: dict) -> str:
    rows = []
    for cell in report["results"]["cells"]:
        for j in range(len(report["results"]["delta_true"])):
            rows.append(
                [cell["n"], cell["label"], cell["method"], j, cell["replications"], cell["failure_count"]]
                + [float(cell[f][j]) for f in _STAT_FIELDS]
            )
    header = ["n", "label", "method", "coordinate", "replications", "failure_count", *_STAT_FIELDS]
    return ivio.dumps_csv(header, rows, _preamble(report))


# --------------------------------------------------------------------------
# diagnose
# --------------------------------------------------------------------------


def default_k_grid(k: int) -> tuple[int, ...]:
    return tuple(sorted({max(1, k >> j) for j in range(5)}))


def _resolve_pi(cfg: RunConfig, data) -> np.ndarray:
    opts = cfg.diagnose
    if opts.pi is not None:
        pi = np.array(opts.pi, dtype=float)
    elif opts.pi_path is not None:
        pi = ivio.read_pi_csv(opts.pi_path)
    elif opts.truth is not None:
        if opts.truth.k != data.k or opts.truth.g != data.g:
            raise DataError(
                f"truth declares k={opts.truth.k}, g={opts.truth.g} but data has k={data.k}, g={data.g}",
                field="diagnose.truth",
            )
        pi = opts.truth.pi_matrix(n=data.n)
    else:
        raise ParameterError(
            "diagnose needs first-stage coefficients: set diagnose.pi / diagnose.pi_path "
            "(a CSV with K rows), or give the generating DGP as [diagnose.truth]",
            field="diagnose.pi",
        )
    if pi.shape[0] != data.k:
        raise DataError(f"pi has {pi.shape[0]} rows but data has K={data.k}", field="diagnose.pi")
    return pi


def diagnose_report(cfg: RunConfig) -> dict:
    data = ivio.read_dataset_csv(cfg.input_path)
    pi = _resolve_pi(cfg, data)
    opts = cfg.diagnose
    k_grid = opts.k_grid if opts.k_grid is not None else default_k_grid(data.k)
    eff = diag.effective_count(pi, data.n, opts.c)
    gaps = diag.q_sequence(data.z, pi, k_grid)
    spec = diag.covariance_spectrum(data.z, opts.weights)
    checks = diag.assumption3_checks(data, pi)
    diagnostics = {
        "effective_count": {
            "threshold": eff.threshold,
            "count_effective": eff.count_effective,
            "count_irrelevant": eff.count_irrelevant,
            "count_below_threshold": eff.count_below_threshold,
            "indices_effective": list(eff.indices_effective),
        },
        "cauchy_gap": {
            "k_grid": list(gaps.k_grid),
            "q_values": gaps.q_values,
            "gaps": gaps.gaps,
            "verdict": gaps.verdict,
        },
        "spectrum": {
            "eigenvalues": spec.eigenvalues,
            "tail_mass": {str(m): v for m, v in spec.tail_mass.items()},
            "flatness": spec.flatness,
            "decay_fit": spec.decay_fit,
            "nuclear_estimate": spec.nuclear_estimate,
        },
        "assumption3": checks,
    }
    return _report(cfg, [], diagnostics, None)


def _flatten(prefix: str, value, out: list) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(value, (list, tuple, np.ndarray)):
        for i, v in enumerate(np.asarray(value).tolist() if isinstance(value, np.ndarray) else value):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append([prefix, float(value) if isinstance(value, (float, np.floating)) else value])


def _diagnose_csv(report: dict) -> str:
    rows: list = []
    _flatten("", report["diagnostics"], rows)
    return ivio.dumps_csv(["key", "value"], rows, _preamble(report))


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def render(cfg: RunConfig, report: dict) -> str:
    if cfg.output_format == "json":
        return ivio.dumps_json(report)
    return {"estimate": _estimate_csv, "simulate": _simulate_csv, "diagnose": _diagnose_csv}[cfg.command](report)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ivspectral", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_data in (("simulate", False), ("estimate", True), ("diagnose", True)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name == "simulate"), help="TOML run configuration")
        if needs_data:
            p.add_argument("--data", help="input CSV with header y,x1..xG,z1..zK")
        p.add_argument("--out", help="report path (stdout when omitted)")
        p.add_argument("--format", choices=("json", "csv"), dest="output_format")
        p.add_argument("--seed", type=int, help="override scenario.master_seed")
        if name == "simulate":
            p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(cfg: RunConfig, workers: int = 1) -> str:
    if cfg.command == "simulate":
        report = simulate_report(cfg, workers)
    elif cfg.command == "estimate":
        report = estimate_report(cfg)
    else:
        report = diagnose_report(cfg)
    text = render(cfg, report)
    if cfg.output_path:
        ivio.write_text(cfg.output_path, text)
    return text


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        text = ""
        if args.config:
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigurationError(f"cannot read {args.config}: {exc.strerror}", field="config") from None
        cfg = parse_config(
            text,
            command=args.command,
            input_path=getattr(args, "data", None),
            output_path=args.out,
            output_format=args.output_format,
            master_seed=args.seed,
        )
        out = run(cfg, workers=getattr(args, "workers", 1))
        if not cfg.output_path:
            sys.stdout.write(out)
    except IVSpectralError as exc:
        sys.stderr.write(json.dumps({"error": exc.to_record()}) + "\n")
        return exc.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
