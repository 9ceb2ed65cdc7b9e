"""Command-line front end.

Exit status: 0 success, 1 model/evidence parse or validation error,
2 numerical degeneracy (singular regression, evaluation failure), 3 I/O.
"""

from __future__ import annotations

import argparse
import sys
import time
from importlib import resources
from pathlib import Path

from . import __version__
from .engine import EvidenceError, EvidenceSpec, analyze
from .expr import EvaluationError
from .model import ModelError, parse_model, validate_model
from .oracle import (
    MAX_QUADRATURE_VARIABLES,
    OracleError,
    additivity_report,
    nested_mc_evi,
    quadrature_evpi,
)
from .regression import DegenerateFitError
from .report import (
    additivity_csv,
    dumps,
    evi_report,
    fit_report,
    oracle_entry,
    plot_data_csv,
    scenario_csv,
    table_text,
    write_atomic,
)
from .sampling import SampleConfig, SamplingError


EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 1, 2, 3
BUILTIN_MODELS = {
    "demo": "evacuation_demo.json",
    "toy": "toy_two_decision.json",
    "nonlinear": "nonlinear_stress.json",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="evimc",
        description="Estimate the expected value of perfect and partial information "
                    "for a Monte Carlo decision model.",
    )
    p.add_argument("--model", required=True,
                   help="model JSON file, or one of the built-in names: "
                        + ", ".join(BUILTIN_MODELS))
    p.add_argument("--seed", type=int, default=0, help="64-bit unsigned seed (default 0)")
    p.add_argument("--samples", type=int, default=10000, help="Monte Carlo sample size N")
    p.add_argument("--evidence", action="append", default=[], metavar="SPEC",
                   help="evidence query, e.g. 'perfect:x1,x2' or 'rim:x1=2;perfect:x3'; "
                        "repeatable. Default: perfect information on each variable")
    p.add_argument("--oracle", action="store_true",
                   help="run reference oracles and write oracle/additivity reports")
    p.add_argument("--quadrature-check", action="store_true",
                   help="cross-check each loss integral by numerical quadrature")
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.add_argument("--out", type=Path, help="directory for report files")
    p.add_argument("--dump-scenarios", action="store_true",
                   help="also write the scenario/value table as CSV (needs --out)")
    p.add_argument("--oracle-samples", type=int, default=1000,
                   help="outer and inner sample count for nested Monte Carlo oracles")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _say(level: str, message: str) -> None:
    print(f"{level}: {message}", file=sys.stderr)


def _read_model_text(source: str) -> str:
    if source in BUILTIN_MODELS and not Path(source).exists():
        return resources.files("evimc.data").joinpath(BUILTIN_MODELS[source]).read_text("utf-8")
    return Path(source).read_text(encoding="utf-8")


def _oracle_for(model, evidence: EvidenceSpec, seed: int, samples: int):
    normal = all(v.prior.kind == "normal" for v in model.variables)
    if (normal and not evidence.partial and len(evidence.perfect) == 1
            and len(model.variables) <= MAX_QUADRATURE_VARIABLES):
        (name,) = evidence.perfect
        return quadrature_evpi(model, name), ""
    try:
        return nested_mc_evi(model, evidence, samples, samples, seed), ""
    except OracleError as e:
        return None, str(e)


def run(args: argparse.Namespace, stdout=None) -> int:
    stdout = stdout or sys.stdout
    started = time.perf_counter()
    try:
        text = _read_model_text(args.model)
    except OSError as e:
        _say("error", f"cannot read model: {e}")
        return EXIT_IO
    try:
        model = parse_model(text)
        for diag in validate_model(model):
            _say("warning", str(diag))
        queries = [EvidenceSpec.parse(q) for q in args.evidence] or [
            EvidenceSpec(perfect=frozenset({name})) for name in model.variable_names
        ]
        config = SampleConfig(args.samples, args.seed)
    except (ModelError, EvidenceError, SamplingError) as e:
        _say("error", f"invalid input: {e}")
        return EXIT_INPUT
    if args.dump_scenarios and args.out is None:
        _say("error", "--dump-scenarios needs --out")
        return EXIT_INPUT

    try:
        analysis = analyze(model, config)
        results = [analysis.evi(q, quadrature_check=args.quadrature_check) for q in queries]
    except EvidenceError as e:
        _say("error", f"invalid evidence: {e}")
        return EXIT_INPUT
    except SamplingError as e:
        _say("error", f"invalid sampling setup: {e}")
        return EXIT_INPUT
    except (DegenerateFitError, EvaluationError) as e:
        _say("error", f"numerical failure: {e}")
        return EXIT_NUMERIC
    for w in analysis.warnings:
        _say("warning", str(w))

    report = evi_report(analysis, results)
    files = {
        "evi_report.json": dumps(report),
        "evi_plot_data.csv": plot_data_csv(results),
        "fit_report.json": dumps(fit_report(analysis)),
    }
    if args.dump_scenarios:
        files["scenarios.csv"] = scenario_csv(analysis)
    if args.oracle:
        try:
            entries = []
            for r in results:
                est, reason = _oracle_for(model, r.evidence, args.seed, args.oracle_samples)
                entries.append(oracle_entry(r.evidence.label, r.evi, est, reason))
            files["oracle_report.json"] = dumps(entries)
            rows = additivity_report(model, config, outer=args.oracle_samples // 2,
                                     inner=args.oracle_samples // 2, oracle_seed=args.seed)
            files["additivity.csv"] = additivity_csv(rows)
        except (OracleError, EvaluationError) as e:
            _say("error", f"oracle failure: {e}")
            return EXIT_NUMERIC

    if args.out is not None:
        try:
            args.out.mkdir(parents=True, exist_ok=True)
            for name, content in files.items():
                write_atomic(args.out / name, content)
        except OSError as e:
            _say("error", f"cannot write reports: {e}")
            return EXIT_IO

    if args.format == "json":
        stdout.write(files["evi_report.json"])
    elif args.format == "csv":
        stdout.write(files["evi_plot_data.csv"])
    else:
        stdout.write(table_text(analysis, results))
    print(f"wall-clock: {time.perf_counter() - started:.3f} s", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
