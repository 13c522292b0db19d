"""signmap command line: simulate, map, semantics, aggregate, evaluate,
render. Stages exchange files in the --out directory."""
import argparse
import asyncio
import logging
import os
import sys

from signmap import __version__ as signmap_version
from signmap import core
from signmap.aggregation import PlacardLandmark
from signmap.backends import BACKENDS
from signmap.config import dump_config, load_config
from signmap.fs import (load_dataset, load_groundtruth, load_json, load_model,
                        read_file)
from signmap.log import setup_logging
from signmap.mapgraph import MERGE_STRATEGIES
from signmap.placards import PlacardObservation
from signmap.protocol import (ValidationError, parse_correspondence,
                              parse_poses)
from signmap.reconstruction import load_map
from signmap.world import InvalidSpec, WorldSpec, check_spec, template_world

logger = logging.getLogger("signmap.cli")

VERBS = ("simulate", "map", "semantics", "aggregate", "evaluate", "render")

class CommandError(Exception):
    pass


def _out(args):
    if args.out:
        return args.out
    if args.dataset:
        return os.path.join(args.dataset, "output")
    raise CommandError("--out is required")

def _dataset(args):
    if not args.dataset:
        raise CommandError("--dataset is required")
    return load_dataset(args.dataset)

def _require(path):
    if not os.path.exists(path):
        raise CommandError("missing input file: " + path)
    return path

def _load_poses(out):
    return parse_poses(read_file(_require(os.path.join(out, core.TRAJECTORY)),
                                 "r"))

def _load_map(out):
    return load_map(_require(os.path.join(out, core.MAP_PGM)),
                    _require(os.path.join(out, core.MAP_JSON)))

def _load_landmarks(path):
    return [PlacardLandmark.from_dict(r) for r in load_json(_require(path))]

def _load_observations(path):
    return [PlacardObservation.from_dict(r) for r in load_json(_require(path))]


async def cmd_simulate(app, args):
    if args.spec:
        spec = load_model(WorldSpec, _require(args.spec))
    else:
        spec = template_world()
    check_spec(spec)
    dataset = await app.simulate(spec, args.seed)
    print("Simulated {} keyframes, {} submaps, {} placards into {}".format(
        len(dataset.registry), len(dataset.registry.submaps),
        len(dataset.groundtruth.placards), app.out))

async def cmd_map(app, args):
    mapped = await app.map(_dataset(args))
    events = mapped.registry.loss_events
    merged = sum(1 for e in events if e.status == "merged")
    print("Mapped {} keyframes; {} of {} loss events merged".format(
        len(mapped.poses), merged, len(events)))
    if mapped.registry.unanchored():
        print("Unmerged submaps: " + " ".join(
            str(m) for m in mapped.registry.unanchored()))

async def cmd_semantics(app, args):
    dataset = _dataset(args)
    observations = await app.semantics(dataset, _load_poses(app.out),
                                       args.backend)
    print("{} observations, {} labeled".format(
        len(observations), sum(1 for o in observations if o.label)))

async def cmd_aggregate(app, args):
    observations = _load_observations(os.path.join(app.out, core.OBSERVATIONS))
    landmarks, discarded = await app.aggregate(observations, _load_map(app.out))
    print("{} landmarks, {} observations discarded".format(len(landmarks),
                                                          len(discarded)))

async def cmd_evaluate(app, args):
    paths = args.landmarks or [os.path.join(app.out, core.LANDMARKS_JSON)]
    trials = [(os.path.basename(os.path.dirname(os.path.abspath(p))) or p,
               _load_landmarks(p)) for p in paths]
    if len(set(n for n, _ in trials)) < len(trials):
        trials = [("trial {}".format(i + 1), lms)
                  for i, (_, lms) in enumerate(trials)]

    truth = None
    if args.baseline:
        reference = _load_landmarks(args.baseline)
    else:
        if not args.dataset:
            raise CommandError("--dataset or --baseline is required")
        path = _require(os.path.join(args.dataset, "groundtruth",
                                     "placards.json"))
        reference = [PlacardLandmark.from_dict(r) for r in load_json(path)]
        truth = load_groundtruth(args.dataset)

    pairs = None
    if args.correspondence:
        pairs = parse_correspondence(read_file(_require(args.correspondence),
                                               "r"))
    elif truth is not None and truth.correspondence:
        pairs = parse_correspondence(truth.correspondence)
        logger.info("using the dataset correspondence, {} pairs".format(
            len(pairs)))
    reports = await app.evaluate(trials, reference, pairs)
    for name, report in reports:
        print("{}: {} matched of {}, displacement {:.3f} m, theta {:.2f} deg"
              .format(name, report.matched_count, report.observed_count,
                      report.displacement_mean, report.theta_err_mean))

async def cmd_render(app, args):
    landmarks_path = os.path.join(app.out, core.LANDMARKS_JSON)
    discarded_path = os.path.join(app.out, core.DISCARDED)
    landmarks = _load_landmarks(landmarks_path) \
            if os.path.exists(landmarks_path) else []
    discarded = _load_observations(discarded_path) \
            if os.path.exists(discarded_path) else []
    traj_path = os.path.join(app.out, core.TRAJECTORY)
    poses = _load_poses(app.out) if os.path.exists(traj_path) else None
    await app.render(_load_map(app.out), landmarks, discarded, poses)
    print("Wrote " + app.path(core.MAP_PNG))

COMMANDS = {
    "simulate": cmd_simulate, "map": cmd_map, "semantics": cmd_semantics,
    "aggregate": cmd_aggregate, "evaluate": cmd_evaluate, "render": cmd_render,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="signmap",
            description="Offline placard mapping from RGB-D keyframes")
    parser.add_argument("--version", action="version",
                        version="signmap " + signmap_version)
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective configuration and exit")
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("verb", nargs="?", choices=VERBS)
    parser.add_argument("--dataset", help="dataset directory")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--spec", help="world spec JSON for simulate")
    parser.add_argument("--backend", choices=BACKENDS)
    parser.add_argument("--merge-strategy", choices=MERGE_STRATEGIES)
    parser.add_argument("--landmarks", action="append",
                        help="landmarks JSON to evaluate, repeatable")
    parser.add_argument("--baseline", help="reference landmarks JSON")
    parser.add_argument("--correspondence",
                        help="CSV of landmark_id, reference_id pairs")
    return parser

def run(argv=None):
    """Exit status of one command"""
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.merge_strategy:
            config.mapping.merge_strategy = args.merge_strategy
        if args.backend:
            config.placards.backend = args.backend

        if args.print_config:
            sys.stdout.write(dump_config(config))
            return 0
        if not args.verb:
            logger.critical("no command given")
            return 1

        app = core.SignmapCore(_out(args), config)
        try:
            asyncio.run(COMMANDS[args.verb](app, args))
        finally:
            app.close()
    except (CommandError, ValidationError, InvalidSpec, ValueError,
            OSError) as e:
        logger.critical(str(e))
        return 1
    return 0

def main():
    setup_logging()
    sys.exit(run())

if __name__ == "__main__":
    main()
