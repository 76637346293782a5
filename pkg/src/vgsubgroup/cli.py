"""Command-line interface.

Subcommands: simulate, compare, analyze, calibrate, bootstrap. Every run
writes its outputs plus ``config.json`` (the resolved configuration, minus
runtime-only settings) and ``manifest.json`` (output checksums) into
``--out``. Exit codes: 0 success (including "no subgroup identified"),
1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from .counterfactual import CounterfactualConfig
from .data import DataError, Signature, atomic_write_text, load_csv, write_csv
from .methods import METHODS, MethodConfig, run_method
from .metrics import (build_curves, comparison_json, comparison_markdown, curves_csv,
                      default_theta_grid, outcomes_json, run_trials)
from .plot import scenario_plots
from .report import transfer_markdown, transfer_table
from .resample import bootstrap_ci, calibrate_threshold
from .simulate import PRESETS, Scenario, gen_scenario_dataset, load_scenario, preset
from .tree import TreeConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
_RUNTIME_ONLY = ("threads", "out", "config")
UNCONTROLLED_BANNER = ("WARNING: exploratory fit without permutation calibration; "
                       "the Type I error of this analysis is not controlled.")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = ""
    seed: int = 0
    threads: int = 1
    out: str = "run"
    config: str | None = None
    # simulate / compare
    scenario: str | None = None
    scenario_config: str | None = None
    scenarios: list = field(default_factory=lambda: list(PRESETS))
    n: int | None = None
    null_twin: bool = False
    methods: list = field(default_factory=lambda: list(METHODS))
    iterations: int = 500
    theta_points: int = 50
    theta_min: float = 1e-4
    # model
    backend: str = "forest"
    n_trees: int = 500
    min_node: int = 20
    max_depth: int = 3
    # analyze / calibrate / bootstrap
    data: str | None = None
    schema: str | None = None
    method: str = "vg"
    theta: float = 0.05
    calibrate: float | None = None
    no_calibration: bool = False
    target: float = 0.05
    n_perm: int = 500
    transfer: str | None = None
    transfer_schema: str | None = None
    bootstrap: int | None = None
    B: int = 500
    level: float = 0.95
    signature: str | None = None

    def validate(self) -> None:
        if self.threads < 1:
            raise UsageError("--threads must be >= 1")
        if self.iterations < 1:
            raise UsageError("--iterations must be >= 1")
        if self.n is not None and self.n < 2:
            raise UsageError("--n must be >= 2")
        if self.theta_points < 1 or not 0 < self.theta_min <= 1:
            raise UsageError("theta grid needs >= 1 point and theta_min in (0, 1]")
        for m in [self.method, *self.methods]:
            if m.lower() not in METHODS:
                raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        for s in self.scenarios:
            if s not in PRESETS:
                raise UsageError(f"unknown scenario {s!r}; choose from {', '.join(PRESETS)}")
        if self.scenario is not None and self.scenario not in PRESETS:
            raise UsageError(f"unknown scenario {self.scenario!r}")
        if self.backend not in ("forest", "single-tree"):
            raise UsageError("--backend must be forest or single-tree")
        if not 0 <= self.theta <= 1:
            raise UsageError("--theta must lie in [0, 1]")
        for lv in (self.calibrate, self.target):
            if lv is not None and not 0 < lv < 1:
                raise UsageError("calibration level must lie in (0, 1)")
        if not 0 < self.level < 1:
            raise UsageError("--level must lie in (0, 1)")
        if self.command in ("analyze", "calibrate", "bootstrap") and not self.data:
            raise UsageError(f"{self.command} needs --data")
        if self.command == "bootstrap" and not self.signature:
            raise UsageError("bootstrap needs --signature")
        if self.command == "analyze" and self.calibrate is not None and self.no_calibration:
            raise UsageError("--calibrate and --no-calibration are exclusive")
        if self.bootstrap is not None and self.bootstrap < 100:
            raise UsageError("--bootstrap B must be >= 100")
        if self.command == "bootstrap" and self.B < 100:
            raise UsageError("--B must be >= 100")
        try:
            self.method_config()
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def method_config(self, backend=None) -> MethodConfig:
        cf = CounterfactualConfig(backend=backend or self.backend, n_trees=self.n_trees)
        return MethodConfig(cf, TreeConfig(self.min_node, self.max_depth, self.theta))

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        for k in _RUNTIME_ONLY:
            d.pop(k, None)
        return d


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int)
    g.add_argument("--out")
    g.add_argument("--config", help="JSON file of RunConfig fields (flags override it)")

    model = _Parser(add_help=False)
    m = model.add_argument_group("model")
    m.add_argument("--backend", choices=["forest", "single-tree"])
    m.add_argument("--n-trees", type=int, dest="n_trees")
    m.add_argument("--min-node", type=int, dest="min_node")
    m.add_argument("--max-depth", type=int, dest="max_depth")

    data = _Parser(add_help=False)
    g = data.add_argument_group("data")
    g.add_argument("--data", help="input CSV")
    g.add_argument("--schema", help="JSON sidecar (default: <data>.schema.json)")
    g.add_argument("--method", help="vg | vt | gi")

    p = _Parser(prog="vgsubgroup", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="write simulated datasets")
    s.add_argument("--scenario")
    s.add_argument("--scenario-config", dest="scenario_config")
    s.add_argument("--n", type=int)
    s.add_argument("--null-twin", action="store_true", default=None, dest="null_twin")

    c = sub.add_parser("compare", parents=[common, model], help="Monte Carlo method comparison")
    c.add_argument("--scenarios", type=_csv_list)
    c.add_argument("--scenario-config", dest="scenario_config")
    c.add_argument("--methods", type=_csv_list)
    c.add_argument("--iterations", type=int)
    c.add_argument("--theta-points", type=int, dest="theta_points")
    c.add_argument("--theta-min", type=float, dest="theta_min")
    c.add_argument("--n", type=int)

    a = sub.add_parser("analyze", parents=[common, model, data], help="fit a method on a CSV")
    a.add_argument("--theta", type=float)
    a.add_argument("--calibrate", type=float, metavar="LEVEL")
    a.add_argument("--n-perm", type=int, dest="n_perm")
    a.add_argument("--no-calibration", action="store_true", default=None, dest="no_calibration")
    a.add_argument("--transfer", help="second CSV to apply the signature to")
    a.add_argument("--transfer-schema", dest="transfer_schema")
    a.add_argument("--bootstrap", type=int, metavar="B")
    a.add_argument("--level", type=float)

    k = sub.add_parser("calibrate", parents=[common, model, data], help="permutation threshold")
    k.add_argument("--target", type=float)
    k.add_argument("--n-perm", type=int, dest="n_perm")

    b = sub.add_parser("bootstrap", parents=[common, model, data], help="signature bootstrap CI")
    b.add_argument("--signature", help="JSON: a condition list or a result.json")
    b.add_argument("--B", type=int, dest="B")
    b.add_argument("--level", type=float)
    return p


def resolve_config(argv) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    values = {}
    if args.get("config"):
        try:
            with open(args["config"], encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        names = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(loaded) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    values.update({k: v for k, v in args.items() if v is not None})
    if args["command"] == "bootstrap" and "backend" not in values:
        values["backend"] = "single-tree"
    cfg = RunConfig(**values)
    cfg.command = args["command"]
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# Output helpers

class Output:
    def __init__(self, cfg: RunConfig):
        self.dir = Path(cfg.out)
        self.files = {}
        self.cfg = cfg

    def text(self, name: str, content: str) -> Path:
        path = self.dir / name
        atomic_write_text(path, content)
        self.files[name] = hashlib.sha256(content.encode("utf-8")).hexdigest()
        return path

    def json(self, name: str, obj) -> Path:
        return self.text(name, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")

    def finish(self) -> None:
        self.json("config.json", self.cfg.echo())
        manifest = {"command": self.cfg.command, "seed": self.cfg.seed,
                    "files": dict(sorted(self.files.items()))}
        self.json("manifest.json", manifest)


def _load(data: str, schema: str | None):
    schema = schema or f"{Path(data).with_suffix('')}.schema.json"
    if not Path(schema).exists():
        raise DataError(f"schema file {schema} not found")
    if not Path(data).exists():
        raise DataError(f"data file {data} not found")
    return load_csv(data, schema)


def _scenario(cfg: RunConfig, name: str | None) -> Scenario:
    if cfg.scenario_config:
        try:
            scn = load_scenario(cfg.scenario_config)
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"invalid scenario config: {exc}") from None
    else:
        scn = preset(name)
    if cfg.n is not None:
        scn = dataclasses.replace(scn, n=cfg.n)
    return scn


def _clean(obj):
    """Replace non-finite floats by None for strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


# --------------------------------------------------------------------------
# Commands

def cmd_simulate(cfg: RunConfig, out: Output) -> int:
    if not cfg.scenario and not cfg.scenario_config:
        raise UsageError("simulate needs --scenario or --scenario-config")
    scn = _scenario(cfg, cfg.scenario)
    targets = [(scn, "")] + ([(scn.null_twin(), "_null")] if cfg.null_twin else [])
    for s, suffix in targets:
        d, truth = gen_scenario_dataset(s, cfg.seed)
        stem = f"{scn.name}_seed{cfg.seed}{suffix}"
        out.text(f"{stem}.csv", _csv_text(d))
        out.json(f"{stem}.schema.json", d.schema())
        out.json(f"{stem}.truth.json", {"scenario": s.to_json(), **truth.to_json()})
        print(f"wrote {stem}.csv: n={d.n}, p={d.p}, predictive={truth.pred_name}")
    return EXIT_OK


def _csv_text(d) -> str:
    from .data import dataset_csv_text

    return dataset_csv_text(d)


def cmd_compare(cfg: RunConfig, out: Output) -> int:
    if cfg.scenario_config:
        scenarios = [_scenario(cfg, None)]
    else:
        scenarios = [_scenario(cfg, s) for s in cfg.scenarios]
    methods = [m.lower() for m in cfg.methods]
    grid = default_theta_grid(cfg.theta_points, cfg.theta_min)
    mcfg = cfg.method_config()
    outcomes = []
    for scn in scenarios:
        print(f"{scn.name}: {cfg.iterations} iterations x {len(methods)} methods", flush=True)
        outcomes += run_trials(scn, methods, cfg.iterations, grid, cfg.seed, mcfg, cfg.threads)
    curves = build_curves(outcomes, grid)
    out.text("curves.csv", curves_csv(curves))
    out.text("comparison.md", comparison_markdown(curves))
    out.text("comparison.json", comparison_json(curves))
    out.text("outcomes.json", outcomes_json(outcomes))
    for scn in scenarios:
        pw, td = scenario_plots(curves, scn.name)
        out.text(f"power_{scn.name}.svg", pw)
        out.text(f"tdr_{scn.name}.svg", td)
    print(comparison_markdown(curves))
    if cfg.iterations < 30:
        print(f"note: {cfg.iterations} iteration(s); standard errors are not meaningful")
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, out: Output) -> int:
    d = _load(cfg.data, cfg.schema)
    cal = calibrate_threshold(d, cfg.method, cfg.target, cfg.n_perm, cfg.seed,
                              cfg.method_config(), cfg.threads)
    out.json("calibration.json", _clean(cal.to_json()))
    print(f"calibrated threshold at Type I {cfg.target}: theta* = {cal.theta:.6g} "
          f"(order statistic {cal.order_index} of {cal.n_perm})")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, out: Output) -> int:
    d = _load(cfg.data, cfg.schema)
    report = []
    theta = cfg.theta
    if cfg.calibrate is not None:
        cal = calibrate_threshold(d, cfg.method, cfg.calibrate, cfg.n_perm, cfg.seed,
                                  cfg.method_config(), cfg.threads)
        out.json("calibration.json", _clean(cal.to_json()))
        theta = cal.theta
        report.append(f"Type I error controlled at {cfg.calibrate} by permutation "
                      f"({cal.n_perm} permutations): theta* = {theta:.6g}")
    else:
        print(UNCONTROLLED_BANNER, file=sys.stderr)
        report.append(UNCONTROLLED_BANNER)
        report.append(f"Split threshold theta = {theta:g}")
    mcfg = dataclasses.replace(cfg.method_config(),
                               tree=TreeConfig(cfg.min_node, cfg.max_depth, theta))
    res = run_method(d, cfg.method, mcfg, cfg.seed)
    out.json("result.json", _clean(res.to_json()))
    out.text("tree.txt", res.render() + "\n")
    report += ["", "```", res.render(), "```"]

    if not res.identified:
        report += ["", "No subgroup identified at this level."]
        out.text("report.md", "\n".join(report) + "\n")
        print("\n".join(report))
        return EXIT_OK

    sig = res.signature
    if cfg.transfer:
        second = _load(cfg.transfer, cfg.transfer_schema or cfg.schema)
        effect = res.ite if res.ite is not None else None
        rows = transfer_table(d, second, sig, effect)
        out.json("transfer.json", _clean(rows))
        out.text("transfer.md", transfer_markdown(rows))
        report += ["", "Estimated treatment effects (second dataset: observed arm-mean "
                   "differences)", "", transfer_markdown(rows)]
    if cfg.bootstrap:
        bs = bootstrap_ci(d, sig, cfg.bootstrap, cfg.level, cfg=CounterfactualConfig(
            backend="single-tree"), seed=cfg.seed, threads=cfg.threads)
        out.json("bootstrap.json", _clean(bs.to_json()))
        out.text("bootstrap.md", bs.markdown())
        report += ["", "Bootstrap (signature fixed from the original fit)", "", bs.markdown()]
    out.text("report.md", "\n".join(report) + "\n")
    print("\n".join(report))
    return EXIT_OK


def _read_signature(path: str) -> Signature:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read signature: {exc}") from None
    if isinstance(obj, dict):
        obj = obj.get("signature", [])
    try:
        return Signature.from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid signature: {exc}") from None


def cmd_bootstrap(cfg: RunConfig, out: Output) -> int:
    d = _load(cfg.data, cfg.schema)
    sig = _read_signature(cfg.signature)
    try:
        for v in sig.variables():
            d.column(v)
    except KeyError as exc:
        raise DataError(str(exc)) from None
    cf = CounterfactualConfig(backend=cfg.backend, n_trees=cfg.n_trees)
    bs = bootstrap_ci(d, sig, cfg.B, cfg.level, cf, cfg.seed, cfg.threads)
    out.json("bootstrap.json", _clean(bs.to_json()))
    out.text("bootstrap.md", bs.markdown())
    print(bs.markdown())
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "analyze": cmd_analyze,
            "calibrate": cmd_calibrate, "bootstrap": cmd_bootstrap}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TypeError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Output(cfg)
    try:
        code = COMMANDS[cfg.command](cfg, out)
        out.finish()
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
