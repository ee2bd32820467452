"""Command-line interface: ``parcelcast {simulate,run,destshare,report}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import datastore, destshare, evaluation, pipeline, simnet, unordered
from .errors import ConfigError, ParcelcastError
from .simnet import MINUTES_PER_DAY

OUT_ENV = "PARCELCAST_OUT_DIR"

FORMATS = """\
event log (simulate --out):
  line 1  '# parcelcast-eventlog v1 start=S end=E weekday=W [seed=N]'
  line 2  column names; then one tab-separated row per parcel:
          parcel_id  order_time  origin  destination  path  events
  path    hub ids joined by '|'
  events  'location,arrival,departure' joined by ';' (departure empty while
          still inside the location at the log end); locations are hub ids or
          routes written 'A>B'; all times are minutes since the log start

report directory (run):
  summary.tsv       method, mase, mae, mase_1-4h, mase_5-8h, mase_9-16h,
                    mase_17-24h, n_pairs
  horizon_mase.tsv  one row per horizon index t, one MASE column per method
  series.tsv        method, t_o, t, forecast, actual, lower, upper
  manifest.json     resolved config, seeds, config hash, file hashes
  every .tsv starts with a '# parcelcast-report v1 <table>' line; reals have
  6 decimals and 'NA' marks undefined values

output directory: --out-dir, else $PARCELCAST_OUT_DIR, else ./parcelcast-out
exit codes: 0 ok, 2 configuration error, 3 data error, 4 training error
"""


def _out_dir(args) -> str:
    return args.out_dir or os.environ.get(OUT_ENV) or "parcelcast-out"


def _add_inputs(p):
    p.add_argument("--network", default="", help="network spec (.ini); default: bundled demo")
    p.add_argument("--sim", default="", help="simulation config (.ini); default: bundled demo")
    p.add_argument("--log", dest="log_path", default="", help="existing event log; skips simulation")
    p.add_argument("--seed", type=int, default=None, help="simulation seed (overrides the sim config)")
    p.add_argument("--hub", dest="target_hub", default="G1", help="target hub id (default G1)")
    p.add_argument("--interval", type=int, default=15, help="period length I in minutes")
    p.add_argument("--horizon", type=int, default=95, help="last horizon index T (T+1 periods)")
    p.add_argument("--out-dir", default=None, help=f"output directory (env {OUT_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parcelcast", description="Parcel-hub arrival forecasting toolkit.",
        epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic event log",
                       epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--network", default="", help="network spec (.ini); default: bundled demo")
    p.add_argument("--sim", default="", help="simulation config (.ini); default: bundled demo")
    p.add_argument("--days", type=int, default=None, help="override horizon_days")
    p.add_argument("--seed", type=int, default=None, help="override the sim seed")
    p.add_argument("--out", default=None, help="log path (default <out-dir>/events.tsv)")
    p.add_argument("--out-dir", default=None, help=f"output directory (env {OUT_ENV})")

    p = sub.add_parser("run", help="train, replay the test days and write the report",
                       epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_inputs(p)
    p.add_argument("--methods", default=",".join(pipeline.DEFAULT_METHODS),
                   help=f"comma-separated subset of {','.join(pipeline.METHODS)}")
    p.add_argument("--model-seed", type=int, default=0, help="seed for network init and forests")
    p.add_argument("--test-days", type=int, default=3)
    p.add_argument("--val-days", type=int, default=3)
    p.add_argument("--epochs", type=int, default=500, help="epochs for the history networks")
    p.add_argument("--ensemble-epochs", type=int, default=500)
    p.add_argument("--trees", type=int, default=100, help="trees per forest")
    p.add_argument("--band-level", type=float, default=0.95)
    p.add_argument("--pooling", choices=evaluation.POOLING, default="pooled")
    p.add_argument("--dry-run", action="store_true", help="print the resolved plan and exit")

    p = sub.add_parser("destshare", help="destination-share replay and allocation of the unordered forecast")
    _add_inputs(p)
    p.add_argument("--alpha", type=float, default=destshare.DEFAULT_ALPHA)
    p.add_argument("--convention", choices=destshare.CONVENTIONS, default="algorithm",
                   help="which term alpha weights (default: the new observation)")
    p.add_argument("--test-days", type=int, default=3)
    p.add_argument("--model-seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--no-allocate", action="store_true", help="skip training the unordered forecaster")

    p = sub.add_parser("report", help="print a run's summary table")
    p.add_argument("--out-dir", default=None, help=f"run directory (env {OUT_ENV})")
    return parser


def cmd_simulate(args) -> int:
    network_path = args.network or str(pipeline.demo_path("demo_network.ini"))
    sim_path = args.sim or str(pipeline.demo_path("demo_sim.ini"))
    network = simnet.build_network(simnet.load_network_spec(network_path))
    cfg = simnet.load_sim_config(sim_path, seed=args.seed)
    if args.days is not None:
        cfg.horizon_days = args.days
        cfg.validate()
    out_dir = Path(_out_dir(args))
    path = Path(args.out) if args.out else out_dir / "events.tsv"
    path.parent.mkdir(parents=True, exist_ok=True)
    records = simnet.simulate(network, cfg)
    end = cfg.horizon_days * MINUTES_PER_DAY
    simnet.write_log(path, records, end, cfg.seed, cfg.start_weekday)
    manifest = {
        "format": "parcelcast-simulate v1",
        "network": network_path,
        "sim": sim_path,
        "days": cfg.horizon_days,
        "seed": cfg.seed,
        "config_hash": _inputs_hash(network_path, sim_path, cfg.horizon_days, cfg.seed),
        "log": path.name,
        "log_sha256": pipeline.file_hash(path),
        "n_parcels": len(records),
    }
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                                                  encoding="utf-8")
    print(f"wrote {len(records)} parcels to {path}")
    return 0


def _inputs_hash(network_path, sim_path, days, seed) -> str:
    h = hashlib.sha256(f"days={days} seed={seed}".encode())
    for p in (network_path, sim_path):
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _run_config(args) -> pipeline.RunConfig:
    return pipeline.RunConfig(
        network=args.network, sim=args.sim, log_path=args.log_path, target_hub=args.target_hub,
        interval=args.interval, horizon=args.horizon,
        methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
        sim_seed=args.seed, model_seed=args.model_seed, test_days=args.test_days, val_days=args.val_days,
        epochs=args.epochs, ensemble_epochs=args.ensemble_epochs, trees=args.trees,
        band_level=args.band_level, pooling=args.pooling, out_dir=_out_dir(args),
    )


def cmd_run(args) -> int:
    cfg = _run_config(args)
    cfg.validate()
    if args.dry_run:
        print(pipeline.plan_text(cfg))
        return 0
    result = pipeline.run(cfg)
    print(evaluation.format_summary(result.reports), end="")
    print(f"report written to {cfg.out_dir}")
    return 0


def cmd_destshare(args) -> int:
    cfg = pipeline.RunConfig(network=args.network, sim=args.sim, log_path=args.log_path,
                             target_hub=args.target_hub, interval=args.interval, horizon=args.horizon,
                             sim_seed=args.seed, model_seed=args.model_seed, test_days=args.test_days,
                             epochs=args.epochs, out_dir=_out_dir(args))
    cfg.validate()
    if not 0 <= args.alpha <= 1:
        raise ConfigError(f"alpha must lie in [0, 1], got {args.alpha}")
    _, event_log = pipeline.load_inputs(cfg)
    spec = cfg.spec()
    span = spec.n_periods * spec.I
    test_start = event_log.start + (event_log.n_days - cfg.test_days) * MINUTES_PER_DAY
    train_days = range(pipeline.BURN_IN_DAYS, event_log.n_days - cfg.test_days)
    init_t_os = [t for t in datastore.observation_times(event_log, train_days, spec.I) if t + span <= test_start]
    test_days = range(event_log.n_days - cfg.test_days, event_log.n_days)
    update_t_os = datastore.observation_times(event_log, test_days, spec.I)
    states = destshare.replay(event_log, cfg.target_hub, spec, init_t_os, update_t_os,
                              alpha=args.alpha, convention=args.convention)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dests = states[0][1].destinations if states else ()
    with open(out / "shares_history.tsv", "w", encoding="utf-8") as fh:
        fh.write(f"# parcelcast-shares v1 alpha={args.alpha} convention={args.convention}\n")
        fh.write("\t".join(["t_o", "t", *dests]) + "\n")
        for t_o, state in states:
            for t, row in enumerate(state.shares):
                fh.write("\t".join([str(t_o), str(t), *(f"{v:.12f}" for v in row)]) + "\n")
    if states:
        destshare.write_shares(out / "shares_final.tsv", states[-1][1], states[-1][0])
    if not args.no_allocate and states:
        model = unordered.train_unordered(event_log, cfg.target_hub, spec,
                                          range(pipeline.BURN_IN_DAYS, event_log.n_days - cfg.test_days),
                                          pipeline._net_cfg(cfg, cfg.model_seed))
        u_hat = unordered.forecast_many(model, event_log, cfg.target_hub, update_t_os)
        with open(out / "allocation.tsv", "w", encoding="utf-8") as fh:
            fh.write("# parcelcast-allocation v1\n")
            fh.write("\t".join(["t_o", "t", "u_hat", *dests]) + "\n")
            for (t_o, state), u in zip(states, u_hat):
                alloc = destshare.allocate(u, state)
                for t in range(spec.n_periods):
                    fh.write("\t".join([str(t_o), str(t), f"{u[t]:.6f}", *(f"{v:.6f}" for v in alloc[t])]) + "\n")
    worst = max((float(np.abs(s.shares.sum(axis=1) - 1).max()) for _, s in states), default=0.0)
    print(f"{len(states)} updates over {len(dests)} destinations; max row-sum deviation {worst:.2e}")
    print(f"shares written to {out}")
    return 0


def cmd_report(args) -> int:
    path = Path(_out_dir(args)) / "summary.tsv"
    if not path.exists():
        raise ConfigError(f"no summary at {path}")
    summary = evaluation.read_summary(path)
    cols = evaluation.SUMMARY_COLUMNS[1:-1]
    print("\t".join(["method", *cols]))
    for method, row in summary.items():
        print("\t".join([method, *(f"{row[c]:.4f}" for c in cols)]))
    return 0


COMMANDS = {"simulate": cmd_simulate, "run": cmd_run, "destshare": cmd_destshare, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ParcelcastError as exc:
        print(f"parcelcast {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"parcelcast {args.command}: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
