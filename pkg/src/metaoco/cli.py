"""Command-line interface.

Subcommands mirror the experiment families:

  regression      squared-error streams, methods I-OGA / mean-OPMS / OPMS
  classification  hinge streams with label noise, same methods
  ewa-eta         expert streams, learning the aggregation rate
  ewa-prior       expert streams, learning the prior
  verify          run the invariant suite; nonzero exit on any violation

Every run prints a summary table to stdout.  With ``--out report.csv`` the
per-task records are written in the fixed ``method,r,seed,task,mse,cumloss``
schema and a companion figure ``report.png`` is rendered next to it
(``--no-plot`` skips the figure).  Flags can also be supplied from a plain
``key=value`` file via ``--config``; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (
    EWA_MODES,
    Method,
    MethodSpec,
    run_stream,
    summary_table,
    write_csv,
)
from .generators import ExpertStreamCfg, StreamCfg

__all__ = ["main"]


def _floats(s: str) -> tuple:
    try:
        return tuple(float(x) for x in s.split(",") if x != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _ints(s: str) -> tuple:
    try:
        return tuple(int(x) for x in s.split(",") if x != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def _alpha(s: str):
    if s in ("theory", "practical"):
        return s
    try:
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--alpha takes 'theory', 'practical' or a number, got {s!r}")


def _gamma(s: str) -> str:
    if s not in ("fixed", "learned"):
        raise argparse.ArgumentTypeError(f"--gamma takes 'fixed' or 'learned', got {s!r}")
    return s


# option name -> (parser, default, help); shared by flags and config files
_COMMON = {
    "runs": (int, 10, "number of independent repetitions"),
    "seed": (int, 0, "base seed; run i uses seed+i"),
    "alpha": (_alpha, None, "meta step size rule: theory, practical or a number"),
    "out": (str, None, "write per-task records to this CSV path"),
    "config": (str, None, "key=value file supplying defaults for these flags"),
}

_OGA_OPTS = {
    "d": (int, None, "input dimension"),
    "n": (int, None, "rounds per task"),
    "T": (int, None, "number of tasks"),
    "r": (_floats, None, "task dispersion radii (comma-separated)"),
    "sigma2": (float, 0.5, "half-width of the observation noise"),
    "theta0": (float, 5.0, "common value of the task-center coordinates"),
    "gamma": (_gamma, "learned", "'learned' includes the OPMS arm, 'fixed' drops it"),
    "gamma-grid": (_floats, None, "gradient-bound candidates for OPMS"),
}

_EWA_OPTS = {
    "M": (int, 50, "number of experts"),
    "n": (int, 20, "rounds per task"),
    "T": (int, 400, "number of tasks"),
    "support": (_ints, (0, 1), "experts allowed to be best (comma-separated)"),
    "B": (float, 1.0, "range of one expert loss"),
}

_MODE_OPTS = {
    "regression": {**_OGA_OPTS, **_COMMON,
                   "d": (int, 20, _OGA_OPTS["d"][2]),
                   "n": (int, 30, _OGA_OPTS["n"][2]),
                   "T": (int, 200, _OGA_OPTS["T"][2]),
                   "r": (_floats, (0.0,), _OGA_OPTS["r"][2])},
    "classification": {**_OGA_OPTS, **_COMMON,
                       "d": (int, 10, _OGA_OPTS["d"][2]),
                       "n": (int, 100, _OGA_OPTS["n"][2]),
                       "T": (int, 500, _OGA_OPTS["T"][2]),
                       "r": (_floats, (2.0,), _OGA_OPTS["r"][2]),
                       "flip-frac": (float, 0.1, "fraction of labels flipped per task")},
    # B=2 keeps the tuned rate interior to [1/n, 1] so the adaptation in the
    # demo is visible; B=1 pins every method at the upper endpoint
    "ewa-eta": {**_EWA_OPTS, **_COMMON, "B": (float, 2.0, _EWA_OPTS["B"][2])},
    "ewa-prior": {**_EWA_OPTS, **_COMMON,
                  "cexp": (float, 1.0, "scale of the prior penalty term")},
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metaoco",
        description="meta-learning of tuning parameters for online learners",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode, opts in _MODE_OPTS.items():
        p = sub.add_parser(mode, help=f"run the {mode} experiment")
        for name, (typ, _default, help_) in opts.items():
            p.add_argument(f"--{name}", type=typ, default=None, help=help_)
        p.add_argument("--no-plot", action="store_true", default=None,
                       help="skip the report figure")
    sub.add_parser("verify", help="run the invariant suite")
    return parser


def _read_config(path: str) -> dict:
    """Parse a plain key=value file (blank lines and # comments ignored)."""
    values = {}
    for i, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{i}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def _settings(mode: str, args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    """Layer built-in defaults, then the config file, then explicit flags."""
    opts = _MODE_OPTS[mode]
    merged = {name: default for name, (_t, default, _h) in opts.items()}
    merged["no_plot"] = False
    if args.config is not None:
        try:
            for key, raw in _read_config(args.config).items():
                name = key.replace("_", "-")
                if name == "no-plot":
                    merged["no_plot"] = raw.lower() in ("1", "true", "yes")
                    continue
                if name not in opts or name == "config":
                    parser.error(f"unknown config key {key!r} for {mode}")
                try:
                    merged[name] = opts[name][0](raw)
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    parser.error(f"bad config value for {key!r}: {exc}")
        except OSError as exc:
            parser.error(f"cannot read config file: {exc}")
    for name in opts:
        got = getattr(args, name.replace("-", "_"))
        if got is not None:
            merged[name] = got
    if args.no_plot is not None:
        merged["no_plot"] = True
    return merged


def _oga_methods(cfg: dict, parser) -> list[MethodSpec]:
    alpha = cfg["alpha"]
    methods = [MethodSpec(Method.I_OGA),
               MethodSpec(Method.MEAN_OPMS, alpha_rule=alpha)]
    if cfg["gamma"] == "learned":
        methods.append(MethodSpec(Method.OPMS, alpha_rule=alpha,
                                  gamma_grid=cfg["gamma-grid"]))
    elif cfg["gamma-grid"] is not None:
        parser.error("--gamma-grid requires --gamma learned")
    return methods


def _run_mode(mode: str, cfg: dict, parser) -> int:
    seeds = list(range(cfg["seed"], cfg["seed"] + cfg["runs"]))
    if mode in EWA_MODES:
        stream_cfg = ExpertStreamCfg(M=cfg["M"], n=cfg["n"], T=cfg["T"],
                                     support=cfg["support"], B=cfg["B"],
                                     cexp=cfg.get("cexp", 1.0), seed=cfg["seed"])
        alpha = cfg["alpha"]
        if mode == "ewa-eta":
            methods = [MethodSpec(Method.I_EWA),
                       MethodSpec(Method.OGMS_ETA, alpha_rule=alpha),
                       MethodSpec(Method.OPMS_ETA, alpha_rule=alpha)]
        else:
            methods = [MethodSpec(Method.I_EWA),
                       MethodSpec(Method.OPMS_PRIOR, alpha_rule=alpha)]
        records = run_stream(methods, stream_cfg, seeds, mode)
        n = cfg["n"]
    else:
        methods = _oga_methods(cfg, parser)
        records = []
        for r in cfg["r"]:
            stream_cfg = StreamCfg(d=cfg["d"], n=cfg["n"], T=cfg["T"], r=r,
                                   sigma2=cfg["sigma2"], theta0=cfg["theta0"],
                                   flip_frac=cfg.get("flip-frac", 0.0),
                                   seed=cfg["seed"])
            records.extend(run_stream(methods, stream_cfg, seeds, mode))
        n = cfg["n"]

    print(summary_table(records, mode))
    if cfg["out"] is not None:
        out = Path(cfg["out"])
        write_csv(records, out)
        print(f"wrote {out}", file=sys.stderr)
        if not cfg["no_plot"]:
            from .plotting import render_report_figure

            fig = render_report_figure(records, mode, out, n)
            print(f"wrote {fig}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.mode == "verify":
        from .verify import run_all

        failures = run_all(verbose=True)
        if failures:
            print(f"{failures} invariant check(s) failed", file=sys.stderr)
            return 1
        return 0
    cfg = _settings(args.mode, args, parser)
    return _run_mode(args.mode, cfg, parser)


if __name__ == "__main__":
    sys.exit(main())
