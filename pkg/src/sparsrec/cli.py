"""Command line entry point.

    sparsrec run <experiment> [--config FILE] [--alpha V] [--k V] [--beta V]
                              [--noise P] [--seed S] [--out DIR]

Experiments: example1 example2 example3 example4 figure1 figure2 weights.
Config files are flat ``key = value`` text; values are parsed as JSON when
possible (numbers, lists, booleans) and kept as strings otherwise.  Command
line flags override config values.

Exit status: 0 when every run converged and all checks passed, 2 when a
check failed, 1 on usage or runtime errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .harness import (ExperimentSpec, emit_weights_figure, run_example1,
                      run_example2, run_example3, run_example4, run_figure1,
                      run_figure2)

_RUNNERS = {
    "example1": run_example1,
    "example2": run_example2,
    "example3": run_example3,
    "example4": run_example4,
    "figure1": run_figure1,
    "figure2": run_figure2,
    "weights": emit_weights_figure,
}


def parse_config_file(path) -> dict:
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s:%d: expected 'key = value'" % (path, lineno))
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            try:
                values[key] = json.loads(val)
            except json.JSONDecodeError:
                values[key] = val
    return values


def build_spec(args) -> ExperimentSpec:
    values = {}
    if args.config:
        values.update(parse_config_file(args.config))
    if args.alpha is not None:
        values["alpha"] = args.alpha
    if args.k is not None:
        values["k"] = args.k
    if args.beta is not None:
        values["beta"] = args.beta
    if args.noise is not None:
        values["noise_levels"] = [args.noise]
    if args.seed is not None:
        values["seed"] = args.seed
    if args.out is not None:
        values["output_dir"] = args.out
    known = {f.name for f in dataclasses.fields(ExperimentSpec)}
    unknown = set(values) - known
    if unknown:
        raise ValueError("unknown config keys: %s" % ", ".join(sorted(unknown)))
    return ExperimentSpec(**values)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sparsrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment")
    run_p.add_argument("experiment", choices=sorted(_RUNNERS))
    run_p.add_argument("--config", help="flat key = value config file")
    run_p.add_argument("--alpha", type=float)
    run_p.add_argument("--k", type=int)
    run_p.add_argument("--beta", type=float)
    run_p.add_argument("--noise", type=float, help="single noise level in [0, 1)")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out", help="output directory (default: out)")

    args = parser.parse_args(argv)
    try:
        spec = build_spec(args)
        report = _RUNNERS[args.experiment](spec)
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    for line in report.summary_lines():
        print(line)
    print("artifacts: %d file(s) under %s" % (len(report.artifacts), spec.output_dir))
    if not report.converged:
        print("error: a solve did not converge", file=sys.stderr)
        return 2
    return 0 if report.all_passed else 2


if __name__ == "__main__":
    sys.exit(main())
