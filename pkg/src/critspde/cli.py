"""Command-line front end: ``critspde run | simulate | list-suites | print-schema | print-defaults``."""

from __future__ import annotations

import argparse
import importlib.util
import json
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .report import dumps, summary_lines, write

ENV_OUTPUT = "CRITSPDE_OUTPUT_DIR"
DEFAULT_OUTPUT = "critspde-out"


def _parse_set(items: list[str]) -> dict:
    """``a.b.c=<json>`` pairs into a nested override dict; bare strings are accepted as strings."""
    out: dict = {}
    for item in items:
        if "=" not in item:
            raise cfgmod.ConfigError(f"--set {item!r}: expected KEY.PATH=VALUE")
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return out


def _overrides(args) -> dict:
    ov = _parse_set(args.set or [])
    for key in ("suite", "seed", "workers"):
        v = getattr(args, key)
        if v is not None:
            ov[key] = v
    if args.out is not None:
        ov["output_dir"] = args.out
    if args.figures:
        ov["figures"] = True
    return ov


def output_dir(cfg: dict) -> Path:
    return Path(cfg["output_dir"] or os.environ.get(ENV_OUTPUT) or DEFAULT_OUTPUT)


def run(cfg: dict, out=None) -> int:
    from .suites import run_suite

    out = out or sys.stdout
    if cfg["figures"]:
        if importlib.util.find_spec("matplotlib") is None:
            raise cfgmod.ConfigError("figures: PNG output needs matplotlib (pip install 'artifact[figures]')")
    names = cfgmod.SUITES if cfg["suite"] == "all" else (cfg["suite"],)
    outdir = output_dir(cfg)
    reports = []
    for name in names:
        rep = run_suite(name, cfg)
        rep.config = {"seed": cfg["seed"], name: cfg[name]}
        write(rep, outdir, cfg["figures"])
        reports.append(rep)
    for line in summary_lines(reports):
        print(line, file=out)
    ok = all(r.passed for r in reports)
    print(f"# {'all checks passed' if ok else 'some checks FAILED'}; reports in {outdir}", file=out)
    return 0 if ok else 1


def _json_arg(name: str, raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        if name == "--model":
            return {"family": raw}
        raise cfgmod.ConfigError(f"{name}: not valid JSON: {raw!r}") from None


def simulate_command(args, out=None) -> int:
    import numpy as np

    from .drifts import drift_from_config
    from .simulator import save_ensemble, simulate
    from .spectral import model_from_config

    model_cfg = _json_arg("--model", args.model)
    drift_cfg = _json_arg("--drift", args.drift)
    for name, node, schema in (("--model", model_cfg, cfgmod._MODEL), ("--drift", drift_cfg, cfgmod._DRIFT)):
        try:
            cfgmod.jsonschema.validate(node, schema)
        except cfgmod.jsonschema.ValidationError as exc:
            suffix = "." + ".".join(map(str, exc.absolute_path)) if exc.absolute_path else ""
            raise cfgmod.ConfigError(f"{name}{suffix}: {exc.message}") from None
    model = model_from_config(model_cfg)
    drift = drift_from_config(drift_cfg, model)
    ens = simulate(model, drift, np.asarray(_json_arg("--x0", args.x0), dtype=float), args.T, args.dt, args.m,
                   args.paths, args.seed, args.scheme, exit_levels=_json_arg("--exit-levels", args.exit_levels))
    outdir = Path(args.out or os.environ.get(ENV_OUTPUT) or DEFAULT_OUTPUT)
    meta, arr = save_ensemble(ens, outdir)
    print(f"wrote {meta} and {arr}: {ens.N} paths x {ens.times.size} times x {ens.m} modes", file=out or sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="critspde", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one suite or all of them")
    r.add_argument("--config", help="JSON config file; missing keys take the defaults")
    r.add_argument("--suite", choices=list(cfgmod.SUITES) + ["all"])
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int, help="process count; reports do not depend on it")
    r.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT} or ./{DEFAULT_OUTPUT})")
    r.add_argument("--figures", action="store_true", help="also render PNG figures next to the plot data")
    r.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                   help="override one config value, e.g. uniqueness.N=2000 (repeatable)")
    s = sub.add_parser("simulate", help="simulate one path ensemble and write it to disk")
    s.add_argument("--model", default='{"family": "burgers1d", "M": 16}',
                   help="model as JSON, or a family name with default size")
    s.add_argument("--drift", default='{"kind": "zero"}', help="drift as JSON")
    s.add_argument("--x0", default="[]", help="initial coefficients as a JSON list (zero-padded)")
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--dt", type=float, default=0.01)
    s.add_argument("--m", type=int, help="Galerkin level (default: all modes)")
    s.add_argument("--paths", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scheme", choices=["exponential_euler", "factorization_check"], default="exponential_euler")
    s.add_argument("--exit-levels", default="[]", help="JSON list of levels n whose exit times tau_n are recorded")
    s.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT} or ./{DEFAULT_OUTPUT})")
    sub.add_parser("list-suites", help="list suite names")
    sub.add_parser("print-schema", help="print the config JSON schema")
    d = sub.add_parser("print-defaults", help="print the full default config")
    d.add_argument("--config", help="show the merged result of this file over the defaults")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-suites":
            from .suites import DESCRIPTIONS

            for name in cfgmod.SUITES:
                print(f"{name}\t{DESCRIPTIONS[name]}")
            return 0
        if args.command == "print-schema":
            sys.stdout.write(dumps(cfgmod.SCHEMA))
            return 0
        if args.command == "print-defaults":
            sys.stdout.write(dumps(cfgmod.load(args.config)))
            return 0
        cfg = None if args.command == "simulate" else cfgmod.load(args.config, _overrides(args))
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return simulate_command(args) if cfg is None else run(cfg)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # precondition failures from the numerical modules, reported verbatim
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        # blow-up past the overflow guard
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
