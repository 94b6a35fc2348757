"""Command-line front end.

Exit status: 0 on success, 2 on invalid input (config, flags, flood spec),
1 on runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional, Sequence

from filelock import FileLock, Timeout

from .attacker import FloodSpec, FloodSpecError
from .campaign import Campaign, CampaignError, PhaseTrace, Testbed, find_threshold_ar
from .config import (ConfigError, ConfigParseError, ScenarioConfig, build_profile, default_config,
                     load_config, parse_port)
from .devicemodel import PayloadClass, ProfileError
from .netsim import Protocol, SimulationError
from .report import FIGURES, FigureError, emit_figure_data, report_json, trace_csv, write_report

OUT_ENV = "EC_ATTACK_SIM_OUT"
EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


class ValidationError(ValueError):
    pass


def _config(args) -> ScenarioConfig:
    path = getattr(args, "config", None)
    cfg = load_config(path) if path else default_config()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _out_dir(args, cfg: ScenarioConfig) -> Path:
    return Path(getattr(args, "out", None) or os.environ.get(OUT_ENV) or cfg.output.dir)


@contextmanager
def _locked(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(out / ".ec-attack-sim.lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise SimulationError(f"output directory {out} is in use by another run") from None
    try:
        yield out
    finally:
        lock.release()


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _protocol(text: str) -> Protocol:
    try:
        return Protocol.parse(text)
    except ValueError:
        raise ValidationError(f"unknown protocol {text!r}") from None


def _payload(text: str) -> PayloadClass:
    try:
        return PayloadClass.parse(text)
    except ValueError:
        raise ValidationError(f"payload must be np or hp, got {text!r}") from None


def cmd_scan(args) -> int:
    cfg = _config(args)
    entry = cfg.device(args.device)
    lo, hi = args.range
    bed = Testbed({entry.id: build_profile(entry)}, seed=cfg.seed, metered=False)
    bed.associate_all()
    net = bed.attacker.scan_network()
    ports = bed.attacker.scan_ports(entry.id, args.protocol, (lo, hi))
    result = {"host": vars(net.hosts[0]), **ports.as_dict()}
    text = json.dumps(result, indent=2) + "\n"
    with _locked(_out_dir(args, cfg)) as out:
        _write(out / f"scan_{entry.id}_{args.protocol}.json", text)
    print(json.dumps(ports.as_dict()["counts"]))
    return EXIT_OK


def cmd_flood(args) -> int:
    cfg = _config(args)
    entry = cfg.device(args.device)
    proto = _protocol(args.protocol)
    try:
        port = None if proto is Protocol.ICMP_ECHO else parse_port(args.port)
    except ValueError:
        raise ValidationError(f"--port must be a number or a port state, got {args.port!r}") from None
    spec = FloodSpec(proto, entry.id, args.rate, _payload(args.payload), port, max_duration=args.duration_min)
    bed = Testbed({entry.id: build_profile(entry)}, seed=cfg.seed)
    bed.associate_all()
    handle = bed.attacker.launch_flood(spec)
    start = bed.now
    bed.run_for(spec.duration_s)
    bed.attacker.stop_flood(handle)
    trace = PhaseTrace(entry.id, "flood", start, bed.now, bed.devices[entry.id].samples_between(start, bed.now),
                       f"{entry.id}_flood_{proto.value.lower()}_{spec.payload_class.value.lower()}_{spec.rate}")
    summary = {
        "device": entry.id, "protocol": proto.value, "payload": spec.payload_class.value,
        "port": handle.port, "rate": spec.rate, "minutes": spec.max_duration, **handle.counters(),
        "disconnect_t": handle.disconnected_at, "sd_minutes": handle.survival_minutes,
    }
    with _locked(_out_dir(args, cfg)) as out:
        _write(out / f"{trace.name}.csv", trace_csv(trace))
        _write(out / f"{trace.name}.json", json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_threshold(args) -> int:
    cfg = _config(args)
    entry = cfg.device(args.device)
    thr = find_threshold_ar(build_profile(entry), _protocol(args.protocol), _payload(args.payload),
                            method=args.method)
    print("unbounded" if thr is None else thr)
    return EXIT_OK


def _run_campaign(cfg: ScenarioConfig):
    campaign = Campaign(cfg.to_plan())
    try:
        return campaign.run()
    except CampaignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.report


def cmd_campaign(args) -> int:
    cfg = _config(args)
    report = _run_campaign(cfg)
    with _locked(_out_dir(args, cfg)) as out:
        write_report(report, out, cfg.output.formats)
        if args.figures:
            for fig in FIGURES:
                try:
                    emit_figure_data(report, fig, out)
                except FigureError as exc:
                    print(f"skipped {fig}: {exc}", file=sys.stderr)
    if report.status != "ok":
        return EXIT_RUNTIME
    print(json.dumps({k: v for k, v in json.loads(report_json(report)).items() if k == "attribution"}))
    return EXIT_OK


def cmd_emit(args) -> int:
    cfg = _config(args)
    report = _run_campaign(cfg)
    figures = FIGURES if args.figure == "all" else (args.figure,)
    with _locked(_out_dir(args, cfg)) as out:
        for fig in figures:
            path = emit_figure_data(report, fig, out)
            print(path)
    return EXIT_OK


def _range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in text.split("-", 1))  # lo > hi is an empty range
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like LO-HI, got {text!r}") from None
    if not (0 <= lo <= 65535 and 0 <= hi <= 65535):
        raise argparse.ArgumentTypeError(f"range out of bounds: {text!r}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS so a flag given before the subcommand is not reset by the subparser
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                        help="scenario config (JSON); defaults to the built-in scenario")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                        help=f"output directory (default: ${OUT_ENV} or config output.dir)")

    p = argparse.ArgumentParser(prog="ec-attack-sim", description="Energy-consumption attack testbed simulator.",
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scan", parents=[common], help="network and port scan of one device")
    s.add_argument("--device", required=True)
    s.add_argument("--protocol", choices=("tcp", "udp"), default="tcp")
    s.add_argument("--range", type=_range, default=(0, 65535), help="port range LO-HI")
    s.set_defaults(func=cmd_scan)

    def flood_flags(sp, payload_default="np"):
        sp.add_argument("--device", required=True)
        sp.add_argument("--protocol", required=True, help="tcp, udp or icmp")
        sp.add_argument("--payload", default=payload_default, help="np (0 B) or hp (1500 B)")

    f = sub.add_parser("flood", parents=[common], help="run one flood against one device")
    flood_flags(f)
    f.add_argument("--rate", type=int, required=True, help="packets per second")
    f.add_argument("--duration-min", type=float, default=8.0, dest="duration_min")
    f.add_argument("--port", default="open", help="port number or port state (open, closed, filtered, open_filtered)")
    f.set_defaults(func=cmd_flood)

    t = sub.add_parser("threshold", parents=[common], help="search the minimum disconnecting attack rate")
    flood_flags(t)
    t.add_argument("--method", choices=("binary", "linear"), default="binary")
    t.set_defaults(func=cmd_threshold)

    c = sub.add_parser("campaign", parents=[common], help="run the full attack campaign")
    c.add_argument("--figures", action="store_true", help="also emit figure data for every available figure")
    c.set_defaults(func=cmd_campaign)

    e = sub.add_parser("emit", parents=[common], help="run the campaign and write figure data")
    e.add_argument("--figure", required=True, choices=(*FIGURES, "all"))
    e.set_defaults(func=cmd_emit)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on bad flags
    try:
        return args.func(args)
    except (ConfigError, ConfigParseError, FloodSpecError, ProfileError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SimulationError, FigureError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
