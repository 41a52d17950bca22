"""Command-line entry point: ``retail-abm <command> ...``."""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Callable

from . import __version__, conjoint, doe, engine
from .choice import Emergency, load_partworths
from .config import ConfigError, ScenarioConfig, config_to_mapping, data_path, load_config
from .geo import generate_town, write_sites

MANIFEST = "manifest.json"


class CliError(Exception):
    """User-facing failure; reported on stderr with exit code 1."""


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(command: str, seed: int | None, config: dict | None,
              inputs: list[str | Path], out_dir: Path, outputs: list[str]) -> dict:
    return {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {name: _sha256(out_dir / name) for name in outputs},
    }


def _write_manifest(path: Path, manifest: dict) -> None:
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _emit_dir(out_dir: str | Path, produce: Callable[[Path], list[str]],
              manifest: Callable[[Path, list[str]], dict]) -> None:
    """Build outputs in a scratch directory and move them in only on success."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        names = produce(tmp)
        _write_manifest(tmp / MANIFEST, manifest(tmp, names))
        out_dir.mkdir(exist_ok=True)
        for name in names + [MANIFEST]:
            os.replace(tmp / name, out_dir / name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _emit_file(out: str | Path, produce: Callable[[Path], None],
               manifest: Callable[[Path], dict]) -> None:
    """Single-file outputs get a ``<name>.manifest.json`` next to them."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        produce(tmp / out.name)
        _write_manifest(tmp / MANIFEST, manifest(tmp))
        os.replace(tmp / out.name, out)
        os.replace(tmp / MANIFEST, out.parent / f"{out.name}.manifest.json")
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------

def _resolve_config(args) -> tuple[ScenarioConfig, list[Path]]:
    path = Path(args.config) if args.config else data_path("base_case.cfg")
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed, town_seed=args.seed)
    if getattr(args, "horizon", None) is not None:
        cfg = cfg.replace(horizon_weeks=args.horizon)
    inputs = [path] + [Path(p) for p in (cfg.sites_file, cfg.partworths_file,
                                         cfg.diseases_file) if p]
    return cfg, inputs


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_gen_town(args) -> None:
    counts = dict(n_households=args.households, n_unorg=args.unorganized,
                  n_org=args.organized, n_epharm=args.epharm)
    for name, v in counts.items():
        if v < 0:
            raise CliError(f"{name} must be >= 0, got {v}")
    if args.extent_km <= 0 or args.clusters < 1:
        raise CliError("extent-km must be > 0 and clusters >= 1")
    records = generate_town(**counts, extent_km=args.extent_km, n_clusters=args.clusters,
                            seed=args.seed)
    params = {**counts, "extent_km": args.extent_km, "n_clusters": args.clusters}
    _emit_file(args.out, lambda p: write_sites(records, p),
               lambda d: _manifest("gen-town", args.seed, params, [], d, [Path(args.out).name]))


def cmd_simulate(args) -> None:
    cfg, inputs = _resolve_config(args)

    def produce(d: Path) -> list[str]:
        summary = engine.run(cfg)
        engine.write_weekly(summary, d / "weekly.csv")
        engine.write_summary({"run": summary}, d / "summary.csv", label=None)
        return ["weekly.csv", "summary.csv"]

    _emit_dir(args.out_dir, produce,
              lambda d, names: _manifest("simulate", cfg.seed, config_to_mapping(cfg),
                                         inputs, d, names))


def cmd_sensitivity(args) -> None:
    cfg, inputs = _resolve_config(args)

    def produce(d: Path) -> list[str]:
        res = engine.sensitivity_suite(cfg)
        names = []
        for name, s in res.items():
            engine.write_weekly(s, d / f"weekly_{name}.csv")
            names.append(f"weekly_{name}.csv")
        engine.write_summary(res, d / "sensitivity.csv")
        return names + ["sensitivity.csv"]

    _emit_dir(args.out_dir, produce,
              lambda d, names: _manifest("sensitivity", cfg.seed, config_to_mapping(cfg),
                                         inputs, d, names))


def cmd_sweep(args) -> None:
    cfg, inputs = _resolve_config(args)
    design = doe.full_factorial(args.mode)

    def produce(d: Path) -> list[str]:
        res = doe.sweep(cfg, design, workers=args.workers)
        doe.write_sweep(res, d / "sweep.csv")
        names = ["sweep.csv"]
        for col in doe.RESPONSES:
            y = res.response(col)
            doe.write_anova(doe.anova3(y, design), d / f"anova_{col}.csv")
            doe.write_effects(doe.effect_tables(y, design), d / f"effects_{col}.csv")
            names += [f"anova_{col}.csv", f"effects_{col}.csv"]
        return names

    _emit_dir(args.out_dir, produce,
              lambda d, names: _manifest(f"sweep --mode {args.mode}", cfg.seed,
                                         config_to_mapping(cfg), inputs, d, names))


def cmd_anova(args) -> None:
    if args.design != "standard27":
        raise CliError(f"unknown design {args.design!r}; only 'standard27' is available")
    design = doe.full_factorial(args.mode)
    y = doe.read_response(args.response, args.column)
    table = doe.anova3(y, design)
    if table.degenerate:
        print("warning: degenerate response (zero residual or total variation); "
              "F and p are undefined", file=sys.stderr)
    for r in table.rows:
        print(f"{r.source:60s} {r.df:3d} {r.ss:16.4f} {r.contribution:8.2f}%  "
              f"F={r.f:.2f}  p={r.p:.4f}")
    print(f"R-Sq = {table.r2:.2f}%  R-Sq(adj) = {table.adj_r2:.2f}%")
    if args.out:
        _emit_file(args.out, lambda p: doe.write_anova(table, p),
                   lambda d: _manifest("anova", None, {"column": args.column, "mode": args.mode},
                                       [args.response], d, [Path(args.out).name]))


def cmd_conjoint_design(args) -> None:
    try:
        design = conjoint.generate_design((3,) * 5, T=args.tasks, J=args.alts, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    dg = design.diagnostics()
    print(f"cells: {design.T * design.J}  balance deviation: {dg.balance_deviation}  "
          f"overlap rate: {dg.overlap_rate:.4f}  duplicate profiles: {dg.duplicate_profiles}")
    for code, counts in zip(conjoint.ATTRIBUTE_CODES.values(), dg.level_counts):
        print(f"  {code}: level counts {list(counts)}")
    _emit_file(args.out, lambda p: conjoint.write_design(design, p),
               lambda d: _manifest("conjoint design", args.seed,
                                   {"tasks": args.tasks, "alts": args.alts}, [], d,
                                   [Path(args.out).name]))


def cmd_conjoint_simulate(args) -> None:
    pw = Path(args.partworths) if args.partworths else data_path("partworths.csv")
    tables = load_partworths(pw)
    emergency = Emergency[args.emergency]
    if emergency not in tables:
        raise CliError(f"{pw} has no {args.emergency} table")
    design = conjoint.read_design(args.design, (3,) * 5)
    data = conjoint.simulate_choices(design, conjoint.table_worths(tables[emergency]),
                                     args.respondents, seed=args.seed)
    _emit_file(args.out, lambda p: conjoint.write_dataset(data, p),
               lambda d: _manifest("conjoint simulate", args.seed,
                                   {"emergency": args.emergency,
                                    "respondents": args.respondents},
                                   [args.design, pw], d, [Path(args.out).name]))


def cmd_conjoint_fit(args) -> None:
    data = conjoint.read_dataset(args.data)
    fit = conjoint.fit_mnl(data)
    print(f"converged in {fit.iterations} iterations; LL = {fit.log_likelihood:.4f}; "
          f"max |gradient| = {fit.gradient_norm:.2e}")
    _emit_file(args.out, lambda p: conjoint.write_report(fit, p),
               lambda d: _manifest("conjoint fit", None, None, [args.data], d,
                                   [Path(args.out).name]))


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="retail-abm", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-town", help="generate a synthetic town site file")
    g.add_argument("--households", type=int, default=20000)
    g.add_argument("--unorganized", type=int, default=159)
    g.add_argument("--organized", type=int, default=7)
    g.add_argument("--epharm", type=int, default=4)
    g.add_argument("--extent-km", type=float, default=10.0)
    g.add_argument("--clusters", type=int, default=12)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_town)

    def scenario(name, help_, func, horizon=False):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="key = value config file (default: bundled base case)")
        s.add_argument("--seed", type=int, help="overrides the config's seed and town_seed")
        if horizon:
            s.add_argument("--horizon", type=int, help="override horizon_weeks")
        s.add_argument("--out-dir", required=True)
        s.set_defaults(func=func)
        return s

    scenario("simulate", "run one scenario", cmd_simulate, horizon=True)
    scenario("sensitivity", "run base, best and worst cases", cmd_sensitivity, horizon=True)
    sw = scenario("sweep", "run a 27-row factorial sweep with ANOVA", cmd_sweep, horizon=True)
    sw.add_argument("--mode", choices=sorted(doe.MODES), required=True)
    sw.add_argument("--workers", type=int, default=1)

    a = sub.add_parser("anova", help="ANOVA of a 27-value response file")
    a.add_argument("--design", default="standard27")
    a.add_argument("--response", required=True)
    a.add_argument("--column", help="column name when the file is a CSV with a header")
    a.add_argument("--mode", choices=sorted(doe.MODES), default="discount",
                   help="only changes the factor names")
    a.add_argument("--out", help="write the ANOVA table as CSV")
    a.set_defaults(func=cmd_anova)

    c = sub.add_parser("conjoint", help="choice-based conjoint tools")
    csub = c.add_subparsers(dest="conjoint_command", required=True)
    cd = csub.add_parser("design", help="generate a balanced choice design")
    cd.add_argument("--tasks", type=int, default=16)
    cd.add_argument("--alts", type=int, default=4)
    cd.add_argument("--seed", type=int, default=0)
    cd.add_argument("--out", required=True)
    cd.set_defaults(func=cmd_conjoint_design)
    cs = csub.add_parser("simulate", help="simulate respondents from part-worths")
    cs.add_argument("--design", required=True)
    cs.add_argument("--partworths", help="part-worth CSV (default: bundled tables)")
    cs.add_argument("--emergency", choices=[e.name for e in Emergency], default="HE")
    cs.add_argument("--respondents", type=int, default=150)
    cs.add_argument("--seed", type=int, default=0)
    cs.add_argument("--out", required=True)
    cs.set_defaults(func=cmd_conjoint_simulate)
    cf = csub.add_parser("fit", help="fit a conditional logit to a choice dataset")
    cf.add_argument("--data", required=True)
    cf.add_argument("--out", required=True)
    cf.set_defaults(func=cmd_conjoint_fit)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CliError, ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
