"""Command line entry point: ``sybilwatch <command> ...``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

from . import simulator, topology
from .detector import calibrate_thresholds, stream_rates
from .events import ACCOUNT_CREATED
from .pipeline import checkpoint as ckpt
from .pipeline.config import Settings, dump_settings, load_settings
from .pipeline.ingest import ParseError, ingest, read_bans, read_truth, write_atomic, write_events, write_truth
from .pipeline.runner import run_detect

log = logging.getLogger("sybilwatch")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="YAML config (falls back to $SYBILWATCH_CONFIG)")
    p.add_argument("--seed", type=int, default=default, help="override the simulator seed")
    p.add_argument("--strict", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="abort on malformed or out-of-order input")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sybilwatch", description=__doc__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        return p

    p = command("simulate", "generate a labeled synthetic event log")
    p.add_argument("--out-dir", default=".", type=Path)

    p = command("detect", "run the threshold detector over an event log")
    p.add_argument("log", type=Path)
    p.add_argument("--out-dir", default="detect-out", type=Path)
    p.add_argument("--checkpoint", type=Path, help="checkpoint file to write")
    p.add_argument("--checkpoint-every", type=int, help="write a checkpoint every N events")
    p.add_argument("--stop-after", type=int, help="stop (with a checkpoint) after N events")
    p.add_argument("--resume", type=Path, help="continue from this checkpoint")

    for name, help in (("analyze", "Sybil topology report as JSON"),
                       ("report", "topology report with figures and CSV tables")):
        p = command(name, help)
        p.add_argument("log", type=Path)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--labels", type=Path, help="ground-truth file")
        src.add_argument("--bans", type=Path, help="ban file; banned accounts count as Sybils")
        if name == "analyze":
            p.add_argument("--out", type=Path, help="write JSON here instead of stdout")
        else:
            p.add_argument("--out-dir", default="report", type=Path)
            p.add_argument("--truth", type=Path, help="ground truth, to score --bans")
            p.add_argument("--format", default="png", choices=("png", "pdf", "svg"))

    p = command("calibrate", "fit detector thresholds or simulator isolation")
    csub = p.add_subparsers(dest="target", required=True)
    t = csub.add_parser("thresholds", help="fit rule thresholds on a labeled log")
    _global_flags(t, suppress=True)
    t.add_argument("log", type=Path)
    t.add_argument("--labels", type=Path, required=True)
    t.add_argument("--max-fpr", type=float, default=0.01)
    t.add_argument("--out", type=Path, required=True)
    t = csub.add_parser("isolation", help="tune the simulator to a Sybil isolation fraction")
    _global_flags(t, suppress=True)
    t.add_argument("--fraction", type=float, default=0.8)
    t.add_argument("--tolerance", type=float, default=0.02)
    t.add_argument("--out", type=Path, required=True)

    p = command("serve", "start the HTTP scoring service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    return parser


def _settings(args) -> Settings:
    s = load_settings(args.config)
    if args.seed is not None:
        s = dataclasses.replace(s, sim=s.sim.replace(seed=args.seed).validate())
    if args.strict:
        s = dataclasses.replace(s, strict=True)
    return s


def _labels_and_creation(args, events) -> tuple:
    created = {e.src: e.ts for e in events if e.type == ACCOUNT_CREATED}
    if args.labels:
        labels = read_truth(args.labels).labels
    else:
        banned = read_bans(args.bans)
        labels = {u: ("sybil" if u in banned else "normal") for u in created}
    return labels, created


def _topology(args, s: Settings):
    events = ingest(args.log, s.strict).events
    labels, created = _labels_and_creation(args, events)
    g = topology.graph_from_events(events)
    sg = topology.extract_sybil_subgraph(g, labels, strict=s.strict)
    t = s.topology
    rep = topology.report(sg, created, events, t.burst_threshold, t.burst_window_seconds,
                          t.loose_density, t.loose_clustering)
    return rep, events, labels


def cmd_simulate(args, s: Settings) -> int:
    w = simulator.generate(s.sim)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_events(args.out_dir / "events.jsonl", w.events)
    write_truth(args.out_dir / "truth.jsonl", w)
    print(json.dumps({"events": len(w.events), "accounts": len(w.truth.labels),
                      "sybils": len(w.truth.sybils()), "seed": s.sim.seed}))
    return 0


def cmd_detect(args, s: Settings) -> int:
    metrics = run_detect(args.log, s.classifier, args.out_dir, strict=s.strict,
                         checkpoint_path=args.checkpoint, checkpoint_every=args.checkpoint_every,
                         stop_after=args.stop_after, resume=args.resume)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_analyze(args, s: Settings) -> int:
    rep, _, _ = _topology(args, s)
    text = json.dumps(rep.to_dict(), indent=2) + "\n"
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_report(args, s: Settings) -> int:
    from .plotting import save_report_figures

    rep, events, labels = _topology(args, s)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "topology.json", json.dumps(rep.to_dict(), indent=2) + "\n")
    write_atomic(out / "components.csv", _csv(
        [(c.size, c.edge_count, c.density, c.mean_local_clustering, c.loose) for c in rep.non_trivial()],
        ("size", "edge_count", "density", "mean_local_clustering", "loose")))
    write_atomic(out / "edge_time_gaps.csv", _csv(rep.edge_time_gaps, ("hour", "edges")))
    if args.bans and args.truth:
        truth = read_truth(args.truth).labels
        banned = read_bans(args.bans)
        pos = [u for u, lab in truth.items() if lab == "sybil"]
        neg = [u for u, lab in truth.items() if lab == "normal"]
        recall = sum(u in banned for u in pos) / len(pos) if pos else None
        fpr = sum(u in banned for u in neg) / len(neg) if neg else None
        write_atomic(out / "detection.csv", _csv([(len(pos), len(neg), len(banned), recall, fpr)],
                                                 ("sybils", "normals", "bans", "recall", "fpr")))
    paths = save_report_figures(rep, out, args.format, s.topology.loose_density)
    print(json.dumps({"report": str(out / "topology.json"), "figures": [str(p) for p in paths]}))
    return 0


def cmd_calibrate(args, s: Settings) -> int:
    if args.target == "thresholds":
        events = ingest(args.log, s.strict).events
        labels = read_truth(args.labels).labels
        c = s.classifier
        cfg = calibrate_thresholds(events, labels, tuple(r.feature for r in c.rules),
                                   c.window_seconds, c.min_sent, args.max_fpr, c.evaluation_trigger)
        recall, fpr = stream_rates(events, labels, cfg)
        s = dataclasses.replace(s, classifier=cfg)
        summary = {"training_recall": recall, "training_fpr": fpr, "rules": cfg.to_dict()["rules"],
                   "min_matches": cfg.min_matches}
    else:
        sim = simulator.calibrate_isolation(s.sim, args.fraction, args.tolerance)
        measured = simulator.sybil_isolation(simulator.generate(sim))
        s = dataclasses.replace(s, sim=sim)
        summary = {"isolated_fraction": measured, "sybil_invite_rate": sim.sybil_invite_rate,
                   "sybil_target_sybil_prob": sim.sybil_target_sybil_prob}
    write_atomic(args.out, dump_settings(s))
    print(json.dumps(summary))
    return 0


def cmd_serve(args, s: Settings) -> int:
    from .pipeline.service import serve

    serve(s, args.host, args.port)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "detect": cmd_detect,
    "analyze": cmd_analyze,
    "report": cmd_report,
    "calibrate": cmd_calibrate,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        settings = _settings(args)
        return COMMANDS[args.command](args, settings)
    except (ParseError, ckpt.CheckpointError, simulator.InvalidConfig, simulator.CalibrationFailed,
            ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
