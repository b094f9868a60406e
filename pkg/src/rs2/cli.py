"""Command-line entry point: ``rs2 {run,sweep,theory,nn-proxy,gen-data}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from rs2 import config as cfgmod
from rs2.core import ConfigError, ParseError
from rs2.data import write_csv
from rs2.report import run_experiment, theory_report, theory_rows_csv
from rs2.theory import nn_label_disagreement

log = logging.getLogger("rs2")


def _add_schema_flags(p: argparse.ArgumentParser, sections, required=()):
    for key, (section, _, _, help_text) in cfgmod.SCHEMA.items():
        if section not in sections:
            continue
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, default=None, required=key in required, help=f"[{section}] {help_text}")


def _settings(args, sections) -> dict:
    file_values = cfgmod.read_config(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k, spec in cfgmod.SCHEMA.items() if spec[0] in sections}
    return cfgmod.merged_settings(file_values, overrides)


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rs2", description="Repeated sampling of random subsets: training and bounds.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    all_sections = cfgmod.SECTIONS
    p_run = sub.add_parser("run", help="train one configuration and write its reports")
    p_run.add_argument("--config", help="config file with [dataset] [model] [train] [sweep] [report] sections")
    _add_schema_flags(p_run, all_sections, required=("seed", "out_dir"))

    p_sweep = sub.add_parser("sweep", help="run every (method, r, seed) cell of a sweep")
    p_sweep.add_argument("--config")
    _add_schema_flags(p_sweep, all_sections, required=("seed", "out_dir"))

    p_th = sub.add_parser("theory", help="tabulate the convergence and generalization bounds over r")
    p_th.add_argument("--beta", type=float, required=True, help="smoothness constant")
    p_th.add_argument("--sigma", type=float, default=0.0, help="gradient noise level")
    p_th.add_argument("--b", type=int, default=1, help="batch size")
    p_th.add_argument("--T", type=int, required=True, help="batches per full-data round")
    p_th.add_argument("--X", type=int, required=True, help="rounds")
    p_th.add_argument("--delta0", type=float, default=1.0, help="initial suboptimality l(w0) - l(w*)")
    p_th.add_argument("--r-values", type=_floats, default=(0.1, 0.2, 0.3, 0.5, 1.0))
    p_th.add_argument("--w0-dist", type=float, default=None, help="||w0 - w*|| for the convex bound")
    p_th.add_argument("--n-values", type=_ints, default=(), help="dataset sizes for the generalization bound")
    p_th.add_argument("--C", type=float, default=None, help="step constant, eta_t <= C/t")
    p_th.add_argument("--beta-f", type=float, default=None)
    p_th.add_argument("--L-f", type=float, default=None)
    p_th.add_argument("--method", default="rs2_without_replacement")
    p_th.add_argument("--run", default=None, help="a run's *.final.json to compare against")
    p_th.add_argument("--output", default=None, help="also write the table to this CSV file")

    data_sections = ("dataset",)
    p_nn = sub.add_parser("nn-proxy", help="fraction of examples whose nearest neighbour has another label")
    p_nn.add_argument("--config")
    _add_schema_flags(p_nn, data_sections)

    p_gen = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    p_gen.add_argument("--config")
    p_gen.add_argument("--output", required=True)
    _add_schema_flags(p_gen, data_sections)
    return parser


def _cmd_run(args, sweep: bool) -> int:
    s = _settings(args, cfgmod.SECTIONS)
    spec = cfgmod.experiment_spec(s)
    if not sweep:
        spec = replace(spec, r_values=(spec.base.r,), seeds=(spec.base.seed,), methods=(spec.base.method,), workers=1)
    status = run_experiment(spec)
    print((spec.out_dir / "summary.csv").read_text(), end="")
    return status


def _cmd_theory(args) -> int:
    measured = None
    method = args.method
    if args.run:
        with open(args.run) as fh:
            measured = json.load(fh)
        method = measured.get("method", method)
    rows = theory_report(
        beta=args.beta,
        sigma=args.sigma,
        b=args.b,
        T=args.T,
        X=args.X,
        delta0=args.delta0,
        r_values=args.r_values,
        w0_dist=args.w0_dist,
        N_values=args.n_values,
        C=args.C,
        beta_f=args.beta_f,
        L_f=args.L_f,
        method=method,
        measured=measured,
    )
    text = theory_rows_csv(rows)
    print(text, end="")
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    return 0


def _cmd_nn(args) -> int:
    s = _settings(args, ("dataset",))
    dataset = cfgmod.data_source(s).load()
    print(f"{nn_label_disagreement(dataset):.6f}")
    return 0


def _cmd_gen(args) -> int:
    s = _settings(args, ("dataset",))
    dataset = cfgmod.data_source(s).load()
    write_csv(dataset, args.output)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command in ("run", "sweep"):
            return _cmd_run(args, sweep=args.command == "sweep")
        if args.command == "theory":
            return _cmd_theory(args)
        if args.command == "nn-proxy":
            return _cmd_nn(args)
        return _cmd_gen(args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
