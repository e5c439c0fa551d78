import argparse
import logging
import sys

from .io import read_config, write_config
from .sim import SCENARIOS, ExperimentSpec, run

log = logging.getLogger("irs_forge")


def _sweep_from_extra(extra):
    sweep = {}
    for key, value in extra.items():
        if key.startswith("sweep."):
            sweep[key[6:]] = [float(v) for v in value.replace(",", " ").split()]
    return sweep


def build_parser():
    ap = argparse.ArgumentParser(prog="irs-forge", description="Tile-based IRS link simulations.")
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--config", help="INI file with system parameters")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--realizations", type=int, default=200)
    ap.add_argument("--out", default="out")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="override one configuration field (repeatable)")
    ap.add_argument("--sweep", action="append", default=[], metavar="NAME=V1,V2,...",
                    help="replace a sweep grid (repeatable)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--full", action="store_true", help="use 1000 realizations")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config, extra = read_config(args.config, args.override)
    except (KeyError, ValueError, OSError) as exc:
        print(f"irs-forge: bad configuration: {exc}", file=sys.stderr)
        return 2
    sweep = _sweep_from_extra(extra)
    for item in args.sweep:
        name, _, values = item.partition("=")
        sweep[name.strip()] = [float(v) for v in values.split(",") if v.strip()]
    n = 1000 if args.full else args.realizations
    try:
        job = ExperimentSpec(args.scenario, config, n, args.seed, args.out, sweep, args.workers)
    except ValueError as exc:
        print(f"irs-forge: {exc}", file=sys.stderr)
        return 2
    manifest = run(job)
    write_config(config, job.out_dir / "config_used.ini", extra)
    log.info("wrote %d files to %s in %.1f s", len(manifest.files), job.out_dir, manifest.wall_time_s)
    if manifest.infeasible:
        log.warning("%d scheme results were infeasible", manifest.infeasible)
    return 0


if __name__ == "__main__":
    sys.exit(main())
