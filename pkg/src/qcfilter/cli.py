"""Command line interface: ``qcfilter {run,oc,calibrate,wall}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .pipeline.run import RunError, calibrate, channel_results, emit_oc, output_dir, run
from .pipeline.report import render_text
from .pipeline.scenario import ScenarioError, load_scenario, shipped_scenario
from .priors import DomainError
from .wall import (characteristic_strength, homogeneity_eccentricity, phi_reduction, resistance,
                   slenderness)

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="qcfilter", description=__doc__)
    p.add_argument("--scenario", default=None, help="scenario file (default: shipped masonry wall example)")
    p.add_argument("--out", default=None, help="output directory (env QCFILTER_OUT, default ./qcfilter-out)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", help="full pipeline: Bayesian stages, CoV summaries, calibration, report")
    oc = sub.add_parser("oc", help="write OC curves (independent and AR(2)) for a channel")
    oc.add_argument("channel", nargs="?", default=None)
    sub.add_parser("calibrate", help="calibration from pinned CoVs (fixed-V channels only)")
    sub.add_parser("wall", help="design-point numbers of the wall model")
    return p


def _scenario(args):
    scn = load_scenario(args.scenario or shipped_scenario())
    return scn.with_seed(args.seed) if args.seed is not None else scn


def _cmd_run(args):
    report = run(_scenario(args), args.out, args.seed)
    sys.stdout.write(render_text(report, _scenario(args)))


def _cmd_oc(args):
    scn = _scenario(args)
    names = [args.channel] if args.channel else [o.channel for o in scn.oc]
    if not names:
        raise ScenarioError("oc", "no OC sweep configured; name a channel")
    out = output_dir(args.out)
    for name in names:
        indep, auto = emit_oc(scn, name, out)
        print(f"{name}: quality  pa(independent)  pa(AR2)")
        for (p, a, _), (_, b, _) in zip(indep.points, auto.points):
            print(f"  {p:8.4f}  {a:8.4f}  {b:8.4f}")


def _cmd_calibrate(args):
    scn = _scenario(args)
    mcmc = [c.name for c in scn.channels if c.mode != "fixed"]
    if mcmc:
        raise ScenarioError("channels", f"calibrate needs fixed-V channels; {mcmc} use mcmc (use 'run')")
    sys.stdout.write(render_text(calibrate(scn, channel_results(scn)), scn))


def _cmd_wall(args):
    scn = load_scenario(args.scenario) if args.scenario else load_scenario(shipped_scenario())
    if scn.wall is None:
        raise ScenarioError("wall", "scenario has no wall block")
    geom, spec = scn.wall.geometry, scn.wall.masonry
    fk = characteristic_strength(spec)
    lam = slenderness(geom, spec)
    a = 1 - 2 * geom.r_e
    phi = phi_reduction(lam, geom.r_e)
    hom = homogeneity_eccentricity(lam, geom.r_e)
    rows = [("f_k [MPa]", fk), ("r_h", geom.r_h), ("lambda", lam), ("r_e", geom.r_e), ("A", a),
            ("Phi", phi), ("R [kN/m]", resistance(geom, fk, lam=lam)),
            ("n_fb", spec.exp_alpha), ("n_fm", spec.exp_beta), (f"n_re (branch {hom.branch})", hom.value)]
    for k, v in rows:
        print(f"{k:<18} {v:10.4f}")


COMMANDS = {"run": _cmd_run, "oc": _cmd_oc, "calibrate": _cmd_calibrate, "wall": _cmd_wall}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ScenarioError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RunError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
