"""Command-line entry point.

    calfsense simulate   --out DIR [--scenario corpus|gait|chairstand|tandem] [--stream HOST:PORT]
    calfsense ingest     --listen HOST:PORT --out FILE.csv
    calfsense train      --data DIR --out DIR
    calfsense evaluate   --data DIR --model FILE --out DIR
    calfsense sweep      --data DIR --out DIR
    calfsense gait       --input FILE.csv --out DIR
    calfsense chairstand --input FILE.csv --out DIR
    calfsense tandem     --input FILE.csv --out DIR

Exit status is 0 on success, 1 when a stage fails and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

from . import health
from .config import RunConfig
from .core import MotionLabel, estimate_baseline, normalize
from .csvio import read_csv, write_csv, write_rows
from .errors import CalfSenseError, StageError
from .ingest import SessionSink, serve_ingest
from .pipeline import (
    SWEEP_HEADER,
    corpus_features,
    iter_dataset,
    run_experiment,
    split_features,
    stage,
    sweep,
    sweep_table,
)
from .simulator import (
    ChairStandParams,
    GaitParams,
    TandemParams,
    export_dataset,
    stream_session,
    synth_health,
    synth_session,
)
from .svm import evaluate, load_model, save_model

log = logging.getLogger("calfsense")


def _write_text(path: str, lines: List[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _metrics_lines(result_metrics, extra: Dict[str, object]) -> List[str]:
    m = result_metrics
    lines = [f"{k} = {v}" for k, v in extra.items()]
    lines.append(f"macro_recall = {m.macro_recall:.6f}")
    lines += [f"recall.{c} = {r:.6f}" for c, r in zip(m.classes, m.recall_per_class)]
    return lines


def _write_confusion(path: str, cm) -> None:
    write_rows(path, cm.header(), cm.to_rows())


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, args) -> int:
    sim = cfg.sim_config()
    scenario = args.scenario
    if args.stream:
        if scenario == "corpus":
            session, _ = synth_session(MotionLabel.parse(args.motion), args.subject, args.set, sim)
        else:
            session, _ = synth_health(scenario, _scenario_params(cfg, scenario), sim)
        with stage("stream"):
            stats = stream_session(session, args.stream, cfg["stream.rate"], cfg.adc_scale())
        print(f"frames_sent = {stats.frames_sent}")
        print(f"elapsed_s = {stats.elapsed_s:.3f}")
        if args.out:
            cfg.write_snapshot(args.out)
        return 0

    out = _need_out(args)
    with stage("simulate"):
        if scenario == "corpus":
            n = export_dataset(out, sim)
            print(f"wrote {n} sessions to {out}")
        else:
            session, truth = synth_health(scenario, _scenario_params(cfg, scenario), sim)
            path = os.path.join(out, f"{scenario}.csv")
            write_csv(session, path)
            rows = [[k, f"{t:.6f}"] for k, times in truth.events.items() for t in times]
            rows += [[k, f"{v:.6f}"] for k, v in truth.values.items()]
            rows += [["rest_start", f"{truth.rest_segment[0]:.6f}"], ["rest_end", f"{truth.rest_segment[1]:.6f}"]]
            write_rows(os.path.join(out, "ground_truth.csv"), ["event", "value"], rows)
            print(f"wrote {path}")
    cfg.write_snapshot(out)
    return 0


def _scenario_params(cfg: RunConfig, scenario: str):
    if scenario == "gait":
        return GaitParams(cycle_s=cfg["sim.gait_cycle_s"], stance_duty=cfg["sim.gait_stance_duty"])
    if scenario == "chairstand":
        return ChairStandParams(n_stands=cfg["sim.n_stands"])
    return TandemParams(shake_s=cfg["sim.shake_s"], loss_s=cfg["sim.loss_s"])


def cmd_ingest(cfg: RunConfig, args) -> int:
    _need(args.out, "--out")
    motion = MotionLabel.parse(args.motion) if args.motion else None
    sink = SessionSink(args.subject_id, motion, args.set)
    with stage("ingest"):
        stats = serve_ingest(cfg["ingest.listen"], sink, cfg.adc_scale(), cfg["ingest.accept_timeout_s"])
        if not sink.frames:
            raise ValueError("no frames received")
        write_csv(sink.session(), args.out)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    cfg.write_snapshot(out_dir)
    _write_text(os.path.splitext(args.out)[0] + "_stats.txt", [f"{k} = {v}" for k, v in stats.as_dict().items()])
    for k, v in stats.as_dict().items():
        print(f"{k} = {v}")
    return 0


def _features(cfg: RunConfig, data: str):
    pcfg = cfg.pipeline_config()
    return pcfg, corpus_features(iter_dataset(data), pcfg)[pcfg.window]


def cmd_train(cfg: RunConfig, args) -> int:
    out = _need_out(args)
    pcfg, feats = _features(cfg, _need(args.data, "--data"))
    result = run_experiment(feats, pcfg)
    save_model(result.model, os.path.join(out, "model.txt"))
    _write_confusion(os.path.join(out, "confusion.csv"), result.confusion)
    lines = _metrics_lines(result.metrics, {
        "window": pcfg.window.label(), "n_train": result.n_train, "n_test": result.n_test,
        "pca_k": result.model.pca.k, "kkt_max": f"{result.kkt_max:.3g}", "converged": str(result.converged).lower(),
    })
    _write_text(os.path.join(out, "metrics.txt"), lines)
    cfg.write_snapshot(out)
    print("\n".join(lines))
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = _need_out(args)
    pcfg, feats = _features(cfg, _need(args.data, "--data"))
    with stage("load"):
        model = load_model(_need(args.model, "--model"))
    if args.all:
        test = feats
    else:
        _, test = split_features(feats, pcfg.split_seed)
    with stage("evaluate"):
        cm, metrics = evaluate(model, test.X, test.labels)
    _write_confusion(os.path.join(out, "confusion.csv"), cm)
    lines = _metrics_lines(metrics, {"n_test": len(test), "subset": "all" if args.all else "test-split"})
    _write_text(os.path.join(out, "metrics.txt"), lines)
    cfg.write_snapshot(out)
    print("\n".join(lines))
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    out = _need_out(args)
    pcfg = cfg.pipeline_config()
    data = _need(args.data, "--data")
    rows = sweep(iter_dataset(data), pcfg, compare_scaling=cfg["sweep.compare_scaling"])
    header, table = SWEEP_HEADER, sweep_table(rows)
    write_rows(os.path.join(out, "sweep.csv"), header, table)
    cfg.write_snapshot(out)
    best = next(r for r in rows if r.best)
    print(f"best = {best.spec.label()} macro_recall = {best.macro_recall:.6f}")
    return 0


def _series(cfg: RunConfig, path: str):
    with stage("load"):
        session = read_csv(path)
    with stage("normalize"):
        return normalize(session, estimate_baseline(session, cfg["baseline_s"]))


def _health_outputs(out: str, report, params, cfg: RunConfig, extra: Optional[dict] = None) -> None:
    lines = health.report_lines(report, params, extra)
    _write_text(os.path.join(out, "report.txt"), lines)
    header, rows = health.event_rows(report)
    write_rows(os.path.join(out, "events.csv"), header, rows)
    health.write_plot_data(os.path.join(out, "plot_data.csv"), report)
    cfg.write_snapshot(out)
    print("\n".join(lines))


def cmd_gait(cfg: RunConfig, args) -> int:
    out = _need_out(args)
    series = _series(cfg, _need(args.input, "--input"))
    params = cfg.event_params()
    with stage("analyze"):
        report = health.gait_analyze(series, params, cfg["gait.rest"], cfg["gait.invert"])
    _health_outputs(out, report, params, cfg, {"rest_segment": "%g:%g" % cfg["gait.rest"]})
    return 0


def cmd_chairstand(cfg: RunConfig, args) -> int:
    out = _need_out(args)
    series = _series(cfg, _need(args.input, "--input"))
    params = cfg.event_params()
    with stage("analyze"):
        report = health.chair_stand_count(series, params, cfg["chairstand.window_s"], cfg["chairstand.start_s"])
    _health_outputs(out, report, params, cfg)
    return 0


def cmd_tandem(cfg: RunConfig, args) -> int:
    out = _need_out(args)
    series = _series(cfg, _need(args.input, "--input"))
    params = cfg.event_params()
    with stage("analyze"):
        report = health.tandem_analyze(series, params, cfg["tandem.rest"])
    _health_outputs(out, report, params, cfg, {"rest_segment": "%g:%g" % cfg["tandem.rest"]})
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "gait": cmd_gait,
    "chairstand": cmd_chairstand,
    "tandem": cmd_tandem,
}


class _UsageError(Exception):
    pass


def _need(value, flag: str):
    if not value:
        raise _UsageError(f"missing required option {flag}")
    return value


def _need_out(args) -> str:
    out = _need(args.out, "--out")
    os.makedirs(out, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# argument parsing

# flag -> config key, for the options that have a dedicated flag
_FLAG_KEYS = {
    "seed": "seed",
    "subjects": "sim.subjects",
    "noise": "sim.noise_sigma",
    "n_stands": "sim.n_stands",
    "shake": "sim.shake_s",
    "loss": "sim.loss_s",
    "rate": "stream.rate",
    "window": "window.length_s",
    "overlap": "window.overlap",
    "mode": "window.mode",
    "variance": "pca.variance_target",
    "kernel": "svm.kernel",
    "c": "svm.c",
    "listen": "ingest.listen",
    "vref": "ingest.vref",
    "adc_bits": "ingest.adc_bits",
    "timeout": "ingest.accept_timeout_s",
    "rest": None,  # command specific, see _overrides
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--seed", help="root seed for every random stage")
    common.add_argument("--out", help="output directory (ingest: output CSV file)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="calfsense", description="Calf pressure-sensor array toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic corpus or health recording")
    s.add_argument("--scenario", choices=("corpus", "gait", "chairstand", "tandem"), default="corpus")
    s.add_argument("--subjects")
    s.add_argument("--noise")
    s.add_argument("--n-stands", dest="n_stands")
    s.add_argument("--shake", help="tandem shake onset in s, or 'none'")
    s.add_argument("--loss", help="tandem balance loss in s, or 'none'")
    s.add_argument("--stream", metavar="HOST:PORT", help="send one recording over TCP instead of writing files")
    s.add_argument("--rate", help="streaming speed as a multiple of real time")
    s.add_argument("--motion", default="A1", help="motion to stream in corpus mode")
    s.add_argument("--subject", type=int, default=1)
    s.add_argument("--set-index", dest="set", type=int, default=1)

    s = sub.add_parser("ingest", parents=[common], help="receive one device stream into a CSV file")
    s.add_argument("--listen", metavar="HOST:PORT")
    s.add_argument("--vref")
    s.add_argument("--adc-bits", dest="adc_bits")
    s.add_argument("--timeout", help="seconds to wait for a connection")
    s.add_argument("--subject-id", default="unknown")
    s.add_argument("--motion")
    s.add_argument("--set-index", dest="set", type=int, default=1)

    for name, helptext in (("train", "train and test on the grouped split"),
                           ("evaluate", "score a saved model"),
                           ("sweep", "macro-recall over the window grid")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--data", help="dataset directory with manifest.csv")
        s.add_argument("--window")
        s.add_argument("--overlap")
        s.add_argument("--mode", choices=("fixed", "sliding"))
        s.add_argument("--variance")
        s.add_argument("--kernel", choices=("rbf", "linear"))
        s.add_argument("--c")
        if name == "evaluate":
            s.add_argument("--model", help="model file written by train")
            s.add_argument("--all", action="store_true", help="score every window, not only the test split")

    for name in ("gait", "chairstand", "tandem"):
        s = sub.add_parser(name, parents=[common], help=f"{name} analysis of one recording")
        s.add_argument("--input", help="recording CSV")
        if name != "chairstand":
            s.add_argument("--rest", metavar="START:END", help="rest segment in seconds")
    return p


def _overrides(args) -> Dict[str, str]:
    out = {}
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if key and value is not None:
            out[key] = value
    if getattr(args, "rest", None) is not None:
        out[f"{args.command}.rest"] = args.rest
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise _UsageError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.resolve(args.config, _overrides(args))
    except (OSError, ValueError, _UsageError) as exc:
        print(f"error: configuration: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg, args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CalfSenseError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
