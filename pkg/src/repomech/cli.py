"""``repomech`` command line.

Each subcommand runs the pipeline up to one stage, prints an aligned text
table and, when an output directory is given (``--out-dir`` or
``REPOMECH_OUTPUT_DIR``), writes the JSON alongside.  Without ``--input``
the bundled example book is used together with its bundled assignment.

Exit codes: 0 success, 1 the book or a scenario failed validation,
2 the configuration itself is malformed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path

from . import reports
from .accounting import EndNodePolicy, SLRState, positions_from_structures
from .ccp_compare import compare_with_clearing
from .decomposition import MalformedTFN, decompose
from .econ import (DealerParams, EmptyFeasibleRange, HedgeFundParams, MmfParams, NotBinding, curve_samples,
                   dealer_optimal_rate, slr_rate_sensitivity)
from .flow_network import AscendingFirstLegPrice, SplitPolicyError, build_flow_network, split_nodes
from .generate import generate_book
from .settlement import InvalidEvent, Scenario
from .trade_model import BookError, bilateral_net, load_book, pair_residuals

FIXTURE = "table1.csv"
FIXTURE_ASSIGNMENT = "example_assignment.json"


class ConfigError(Exception):
    pass


class ValidationFailure(Exception):
    pass


@dataclass
class PipelineConfig:
    input: Path
    policy: object
    end_node_policy: EndNodePolicy
    slr: SLRState | None
    fmv_adjustment: Decimal
    fee_per_unit: Decimal
    out_dir: Path | None
    scenario: Path | None


def _decimal(text: str, name: str) -> Decimal:
    try:
        return Decimal(text)
    except InvalidOperation:
        raise ConfigError(f"--{name}: {text!r} is not a number") from None


def _existing(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} {p} does not exist")
    return p


def _policy(text: str | None, default_explicit: bool):
    if text is None:
        text = f"explicit:{reports.data_path(FIXTURE_ASSIGNMENT)}" if default_explicit else "ascending"
    if text == "ascending":
        return AscendingFirstLegPrice()
    kind, sep, path = text.partition(":")
    if kind != "explicit" or not sep:
        raise ConfigError(f"--policy must be 'ascending' or 'explicit:PATH', got {text!r}")
    try:
        return reports.load_assignment(_existing(path, "assignment file"))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"assignment file {path}: {exc}") from None


def make_config(args) -> PipelineConfig:
    use_fixture = args.input is None
    source = reports.data_path(FIXTURE) if use_fixture else _existing(args.input, "input")
    try:
        end_policy = EndNodePolicy(args.end_node_policy)
    except ValueError:
        raise ConfigError(f"unknown end-node policy {args.end_node_policy!r}") from None
    slr = None
    if args.slr_state:
        try:
            data = json.loads(_existing(args.slr_state, "SLR state file").read_text())
            slr = SLRState(data["capital"], data["assets"], data["exposures"], _decimal(args.slr_floor, "slr-floor"))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"SLR state: {exc}") from None
    out = args.out_dir or os.environ.get("REPOMECH_OUTPUT_DIR")
    return PipelineConfig(
        input=source,
        policy=_policy(args.policy, use_fixture),
        end_node_policy=end_policy,
        slr=slr,
        fmv_adjustment=_decimal(args.fmv_adjustment, "fmv-adjustment"),
        fee_per_unit=_decimal(args.fee_per_unit, "fee-per-unit"),
        out_dir=Path(out) if out else None,
        scenario=_existing(args.scenario, "scenario file") if getattr(args, "scenario", None) else None,
    )


class Pipeline:
    """Lazily evaluated stages for one config."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        try:
            self.book = load_book(cfg.input)
        except BookError as exc:
            raise ValidationFailure(str(exc)) from None
        except (ValueError, KeyError) as exc:
            raise ValidationFailure(f"{cfg.input}: {exc}") from None
        self.edges = bilateral_net(self.book)
        self.residuals = pair_residuals(self.book)
        self._tfn = self._dec = None

    @property
    def tfn(self):
        if self._tfn is None:
            try:
                self._tfn = split_nodes(build_flow_network(self.edges), self.cfg.policy)
            except SplitPolicyError as exc:
                raise ValidationFailure(str(exc)) from None
        return self._tfn

    @property
    def decomposition(self):
        if self._dec is None:
            try:
                self._dec = decompose(self.tfn)
            except MalformedTFN as exc:
                raise ValidationFailure(str(exc)) from None
        return self._dec

    def scenario(self) -> Scenario:
        sc = Scenario.start(self.decomposition)
        try:
            events = reports.load_events(self.cfg.scenario)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"scenario file {self.cfg.scenario}: {exc}") from None
        for ev in events:
            try:
                sc.apply(ev)
            except InvalidEvent as exc:
                raise ValidationFailure(str(exc)) from None
        return sc

    def accounting(self) -> list[dict]:
        positions = positions_from_structures(self.decomposition.structures)
        return reports.accounting_json(positions, self.cfg.end_node_policy, self.cfg.fmv_adjustment, self.cfg.slr)

    def ccp(self):
        return compare_with_clearing(self.tfn, self.cfg.end_node_policy, self.cfg.fmv_adjustment,
                                  self.cfg.fee_per_unit, self.decomposition)

    # stage name -> (json payload, text)
    def stage(self, name: str) -> tuple[object, str]:
        if name == "validate":
            agents = self.book.agents
            return ({"trades": len(self.book), "agents": list(agents)},
                    f"{len(self.book)} trades, {len(agents)} agents: ok\n")
        if name == "net":
            return reports.netted_json(self.edges, self.residuals), reports.netted_text(self.edges, self.residuals)
        if name == "split":
            return reports.tfn_json(self.tfn), reports.tfn_text(self.tfn)
        if name == "decompose":
            return (reports.decomposition_json(self.decomposition),
                    reports.decomposition_text(self.decomposition.structures))
        if name == "contracts":
            s = self.decomposition.structures
            return reports.contracts_json(s), reports.contracts_text(s)
        if name == "default-sim":
            sc = self.scenario()
            return reports.scenario_json(sc), reports.scenario_text(sc)
        if name == "account":
            rows = self.accounting()
            return rows, reports.accounting_text(rows)
        if name == "compare-ccp":
            rows = self.ccp()
            return reports.ccp_json(rows), reports.ccp_text(rows)
        raise ConfigError(f"unknown stage {name}")


OUTPUT_NAMES = {
    "validate": "validate", "net": "netted", "split": "tfn", "decompose": "decomposition",
    "contracts": "contracts", "default-sim": "scenario", "account": "accounting", "compare-ccp": "ccp",
}


def _write(out_dir: Path, name: str, payload, text: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.json").write_text(reports.dumps(payload))
    (out_dir / f"{name}.txt").write_text(text)


def cmd_stage(args) -> int:
    cfg = make_config(args)
    if args.command == "default-sim" and cfg.scenario is None:
        raise ConfigError("default-sim needs --scenario")
    pipe = Pipeline(cfg)
    payload, text = pipe.stage(args.command)
    sys.stdout.write(text)
    if cfg.out_dir:
        _write(cfg.out_dir, OUTPUT_NAMES[args.command], payload, text)
    return 0


def cmd_run(args) -> int:
    cfg = make_config(args)
    cfg.out_dir = cfg.out_dir or Path("repomech_out")
    pipe = Pipeline(cfg)
    stages = ["validate", "net", "split", "decompose", "contracts", "account", "compare-ccp"]
    if cfg.scenario:
        stages.append("default-sim")
    for name in stages:
        payload, text = pipe.stage(name)
        _write(cfg.out_dir, OUTPUT_NAMES[name], payload, text)
    sys.stdout.write(reports.decomposition_text(pipe.decomposition.structures))
    sys.stdout.write(f"wrote {len(stages)} reports to {cfg.out_dir}\n")
    return 0


def cmd_generate(args) -> int:
    if args.agents < 2:
        raise ConfigError("--agents must be at least 2")
    text = generate_book(args.seed, args.agents, args.trades)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


ECON_DEFAULTS = {
    "supply": {"alpha": 0.06, "gamma_sigma2": 0.5, "k": 0.1, "m": 1.0},
    "demand": {"a": 0.02, "b": 0.01, "r0": 0.043},
    "dealer": {"r_int": 0.053, "c": 0.08, "floor": 0.05, "d_bar": 0.1},
}


def cmd_econ(args) -> int:
    params = json.loads(json.dumps(ECON_DEFAULTS))
    if args.params:
        try:
            for key, vals in json.loads(_existing(args.params, "params file").read_text()).items():
                params[key].update(vals)
        except (KeyError, ValueError, AttributeError) as exc:
            raise ConfigError(f"params file: {exc}") from None
    try:
        hf = HedgeFundParams(**params["supply"])
        mmf = MmfParams(**params["demand"])
        dealer = DealerParams(demand=mmf, **params["dealer"])
        opt = dealer_optimal_rate(dealer)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"econ parameters: {exc}") from None
    try:
        sens = slr_rate_sensitivity(dealer)
    except NotBinding:
        sens = None
    print(f"r* = {opt.r_star:.10f}  D(r*) = {opt.volume:.10f}  constrained = {opt.constrained}")
    print("dr*/dL = " + (f"{sens:.10f}" if sens is not None else "n/a (constraint not binding)"))
    out = args.out_dir or os.environ.get("REPOMECH_OUTPUT_DIR")
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        samples = curve_samples(hf, mmf, mmf.r0, dealer.r_int, args.points)
        _write_csv(out / "curves.csv", list(samples[0]), [list(s.values()) for s in samples])
        _write_csv(out / "optimizer.csv", ["step", "r", "profit"], [list(t) for t in opt.trace])
    return 0


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([[f"{v:.12g}" if isinstance(v, float) else v for v in r] for r in rows])
    path.write_text(buf.getvalue())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repomech", description="Multilateral repo netting pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="trade book (.csv or .json); defaults to the bundled example")
    common.add_argument("--policy", help="'ascending' or 'explicit:PATH' (assignment file or TFN dump)")
    common.add_argument("--end-node-policy", default=EndNodePolicy.SECURED_FINANCING.value,
                        help="SecuredFinancing or FinalSaleDerivative")
    common.add_argument("--slr-state", help="JSON with capital, assets, exposures applied to every agent")
    common.add_argument("--slr-floor", default="0.05")
    common.add_argument("--fmv-adjustment", default="0")
    common.add_argument("--fee-per-unit", default="0")
    common.add_argument("--out-dir")
    common.add_argument("--scenario", help="JSON list of nonperformance events")

    for name in OUTPUT_NAMES:
        p = sub.add_parser(name, parents=[common])
        p.set_defaults(func=cmd_stage)
    p = sub.add_parser("run", parents=[common], help="full pipeline into --out-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("generate", help="seeded random book as CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--agents", type=int, default=5)
    p.add_argument("--trades", type=int, default=20)
    p.add_argument("--output")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("econ", help="dealer rate problem, curves and optimizer trace")
    p.add_argument("--params", help="JSON overriding supply/demand/dealer parameters")
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_econ)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationFailure as exc:
        print(f"repomech: invalid input: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, EmptyFeasibleRange) as exc:
        print(f"repomech: bad configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
