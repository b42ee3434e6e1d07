"""
CLI interface for sliceguard.
"""
import argparse
import json
import logging
import shlex
from typing import Any, Dict, List, Optional, Sequence

from bench.errors import BenchError
from bench.kpi import kpi_check
from bench.report import BenchReport, export, load_report
from bench.scenarios import SCENARIOS, run_scenario
from descriptors.errors import DescriptorError
from descriptors.parser import load_package
from eps.errors import EpsError
from netem.errors import NetemError
from orchestrator.engine import Orchestrator
from orchestrator.errors import OrchestratorError, ValidationFailed
from orchestrator.handler import get_orchestrator
from tunnel.errors import TunnelError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

RUNTIME_ERRORS = (OrchestratorError, BenchError, EpsError, NetemError, TunnelError, OSError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _pairs(items: Optional[Sequence[str]], what: str) -> Dict[str, str]:
    result = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"{what} must look like key=value, got '{item}'")
        result[key] = value
    return result


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sliceguard", description="Tunneled NFV testbed for EPS network slices")
    verbs = parser.add_subparsers(dest="verb", required=True)

    p = verbs.add_parser("onboard", help="validate and onboard a descriptor package")
    p.add_argument("path")
    p = verbs.add_parser("validate", help="validate a descriptor package without onboarding it")
    p.add_argument("path")

    p = verbs.add_parser("instantiate", help="instantiate a network service or a slice")
    p.add_argument("kind", choices=("ns", "nsi"))
    p.add_argument("id")
    p.add_argument("--site", action="append", metavar="UNIT=SITE", help="place a member on a site")
    p.add_argument("--no-wireguard", action="store_true", help="leave the interfaces in plaintext")
    p.add_argument("--multiplier", type=float, help="flavor multiplier")

    p = verbs.add_parser("action", help="run a day-2 action on a unit")
    p.add_argument("ns")
    p.add_argument("unit")
    p.add_argument("name")
    p.add_argument("params", nargs="*", metavar="KEY=VALUE")

    p = verbs.add_parser("relation", help="inspect relations")
    relation = p.add_subparsers(dest="relation_verb", required=True)
    show = relation.add_parser("show")
    show.add_argument("ns")

    p = verbs.add_parser("bench", help="run scenarios and evaluate reports")
    bench = p.add_subparsers(dest="bench_verb", required=True)
    run = bench.add_parser("run")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--csv", help="also write the statistics as CSV")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", dest="overrides",
                     help="override a setting or a probe parameter")
    kpi = bench.add_parser("kpi")
    kpi.add_argument("report")

    p = verbs.add_parser("ns", help="show or terminate network services")
    ns = p.add_subparsers(dest="ns_verb", required=True)
    show = ns.add_parser("show")
    show.add_argument("id", nargs="?")
    show.add_argument("--json", action="store_true")
    term = ns.add_parser("terminate")
    term.add_argument("id")

    p = verbs.add_parser("tap", help="scan captured underlay frames")
    tap = p.add_subparsers(dest="tap_verb", required=True)
    scan = tap.add_parser("scan")
    scan.add_argument("ns")
    scan.add_argument("needle")
    scan.add_argument("--site-view", action="store_true", help="peel the site-tunnel layer first")
    return parser


def _print_json(data: Any) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def _print_report(report: BenchReport) -> None:
    print(f"scenario {report.scenario} (seed {report.config.get('seed')})")
    print(f"{'interface':<10} {'metric':<10} {'slice':<6} {'count':>6} {'min':>11} {'mean':>11} {'max':>11} {'mdev':>10}")
    for s in report.stats:
        print(f"{s.interface:<10} {s.metric:<10} {s.slice or '-':<6} {s.count:>6} "
              f"{s.min:>11.3f} {s.mean:>11.3f} {s.max:>11.3f} {s.mdev:>10.3f} {s.unit}")
    for link, counts in sorted(report.isolation.items()):
        hits = ", ".join(f"{needle}={count}" for needle, count in counts.items())
        print(f"isolation {link}: {hits}")
    for name, verdict in report.verdicts.items():
        print(f"kpi {name}: {verdict}")


def _onboard(orch: Orchestrator, args) -> int:
    entries = orch.onboard(args.path)
    for entry in entries:
        print(f"{entry.kind}:{entry.id} v{entry.version}")
    return EXIT_OK


def _validate(orch: Orchestrator, args) -> int:
    findings = orch.validate(load_package(args.path))
    for finding in findings:
        print(finding)
    if findings:
        return EXIT_VALIDATION
    print("ok")
    return EXIT_OK


def _instantiate(orch: Orchestrator, args) -> int:
    placement = _pairs(args.site, "--site")
    if args.kind == "nsi":
        if args.no_wireguard:
            raise UsageError("slices are always tunneled; --no-wireguard applies to ns only")
        nsi = orch.instantiate_nsi(args.id, placement, args.multiplier)
        print(f"{nsi.id} {nsi.slice_type} on {nsi.ns.id}: {nsi.ns.phase.value}")
    else:
        ns = orch.instantiate_ns(args.id, placement, wireguard=not args.no_wireguard, flavor_multiplier=args.multiplier)
        print(f"{ns.id}: {ns.phase.value}")
    return EXIT_OK


def _action(orch: Orchestrator, args) -> int:
    _print_json(orch.run_action(args.ns, args.unit, args.name, _pairs(args.params, "action parameter")))
    return EXIT_OK


def _relation(orch: Orchestrator, args) -> int:
    ns = orch.ns(args.ns)
    bags = orch.bus.bags()
    for relation_id in ns.relations:
        relation = orch.bus.relation(relation_id)
        print(f"{relation_id} [{relation.state.value}]")
        for unit_id, bag in bags.get(relation_id, {}).items():
            print(f"  {unit_id} (v{bag.version})")
            for key, value in sorted(bag.entries.items()):
                print(f"    {key} = {value}")
    return EXIT_OK


def _bench(orch: Orchestrator, args) -> int:
    if args.bench_verb == "kpi":
        report = load_report(args.report)
        verdicts = kpi_check(report.stats, report.thresholds)
        for name, verdict in verdicts.items():
            print(f"kpi {name}: {verdict}")
        if verdicts != report.verdicts:
            logger.warning(f"Recomputed verdicts differ from the ones stored in {args.report}")
        return EXIT_OK
    if args.scenario not in SCENARIOS:
        raise UsageError(f"unknown scenario '{args.scenario}'; valid scenarios: {', '.join(SCENARIOS)}")
    overrides: Dict[str, Any] = _pairs(args.overrides, "--set")
    report = run_scenario(args.scenario, overrides, seed=args.seed, settings=orch.settings)
    _print_report(report)
    if args.out:
        export(report, args.out, "json")
    if args.csv:
        export(report, args.csv, "csv")
    return EXIT_OK


def _ns(orch: Orchestrator, args) -> int:
    if args.ns_verb == "terminate":
        print(f"{args.id}: {orch.terminate(args.id).value}")
        return EXIT_OK
    if args.id:
        data = orch.ns(args.id).describe()
        if args.json:
            _print_json(data)
        else:
            print(f"{data['id']} {data['nsd']} {data['phase']}")
        return EXIT_OK
    if args.json:
        _print_json(orch.describe())
        return EXIT_OK
    for ns_id, ns in orch.instances.items():
        sites = ",".join(sorted(set(ns.placement.values())))
        print(f"{ns_id} {ns.nsd_id} {ns.phase.value} wireguard={'on' if ns.wireguard else 'off'} sites={sites}")
    for nsi_id, nsi in orch.slices.items():
        print(f"{nsi_id} {nsi.slice_type} on {nsi.ns.id} 5qi={nsi.qos.five_qi}")
    return EXIT_OK


def _tap(orch: Orchestrator, args) -> int:
    for link_id, count in orch.tap_scan(args.ns, args.needle, site_view=args.site_view).items():
        print(f"{link_id}: {count}")
    return EXIT_OK


HANDLERS = {
    "onboard": _onboard,
    "validate": _validate,
    "instantiate": _instantiate,
    "action": _action,
    "relation": _relation,
    "bench": _bench,
    "ns": _ns,
    "tap": _tap,
}


def run_command(argv: Sequence[str], orchestrator: Optional[Orchestrator] = None) -> int:
    """Run one verb and return its exit code."""
    try:
        args = build_parser().parse_args(list(argv))
        return HANDLERS[args.verb](orchestrator or get_orchestrator(), args)
    except UsageError as e:
        print(f"usage error: {e}")
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    except ValidationFailed as e:
        for finding in e.findings:
            print(finding)
        return EXIT_VALIDATION
    except DescriptorError as e:
        print(f"error: {e}")
        return EXIT_VALIDATION
    except RUNTIME_ERRORS as e:
        logger.error(f"Error processing command: {e}")
        print(f"error: {e}")
        return EXIT_RUNTIME


def split_line(line: str) -> List[str]:
    try:
        return shlex.split(line)
    except ValueError as e:
        raise UsageError(str(e)) from None


def start_cli():
    """Start the interactive sliceguard shell."""
    logger.info("Starting CLI interface")
    print("sliceguard shell (type 'exit' to quit)")

    while True:
        user_input = input("\nsliceguard> ")

        if user_input.strip().lower() == 'exit':
            print("Goodbye!")
            break
        if not user_input.strip():
            continue

        try:
            code = run_command(split_line(user_input))
            if code != EXIT_OK:
                print(f"(exit {code})")
        except UsageError as e:
            print(f"usage error: {e}")
        except Exception as e:
            logger.error(f"Error processing request: {e}")
            print(f"Sorry, an error occurred: {e}")
