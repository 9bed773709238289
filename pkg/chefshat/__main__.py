"""
Command line entry point.

    python -m chefshat train-vs-random --agent ppo --games 200 --seed 7 --out run1
    python -m chefshat self-play --agent dql --generations 10 --out run2
    python -m chefshat self-play --agent ppo --opponent run1/ppo.weights.json --out run2
    python -m chefshat tournament --model d.json --model a.json --model p.json --out run3
    python -m chefshat evaluate --model run1/ppo.weights.json --out run4
    python -m chefshat replay run1/transcripts.jsonl
    python -m chefshat catalog
"""

import argparse
import os
import sys

from .actions import catalog_csv
from .agents import RandomAgent, load_agent
from .arena import (
    ExperimentConfig,
    evaluate,
    run_generation_head_to_head,
    run_self_play,
    run_vs_others,
    run_vs_random,
)
from .cards import NUM_SEATS, ChefsHatError, InvalidArgumentError
from .conf import AGENT_KINDS, load_conf
from .file import mkdirp
from .log import get_logger, init_log
from .seeding import split_seed
from .telemetry import Telemetry, replay_transcripts, write_results

logger = get_logger("chefshat.main")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="chefshat", description="Chef's Hat agents: training, evaluation and replay"
    )
    parser.add_argument("--log-level", default="info",
                        choices=["debug", "info", "warning", "error"], help="console log level")
    commands = parser.add_subparsers(dest="command", required=True)

    def experiment(name, help):
        p = commands.add_parser(name, help=help)
        p.add_argument("--config", help="yaml file merged over the defaults")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--eval-runs", type=int, help="evaluation series")
        p.add_argument("--eval-games", type=int, help="games per evaluation series")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--no-telemetry", action="store_true", default=False,
                       help="skip qtrace.csv and transcripts.jsonl")
        return p

    p = experiment("train-vs-random", "train one learner against three random agents")
    p.add_argument("--agent", choices=AGENT_KINDS, required=True)
    p.add_argument("--games", type=int, help="training games")

    p = experiment("self-play", "generational self-play of one learner kind")
    p.add_argument("--agent", choices=AGENT_KINDS, required=True)
    p.add_argument("--games", type=int, help="training games per generation")
    p.add_argument("--generations", type=int)
    p.add_argument("--opponent", help="weight file of the head-to-head fourth seat, random when omitted")
    p.add_argument("--head-to-head", type=int, nargs=3, metavar="GEN",
                   help="generations seated in the head-to-head, first, middle and last by default")

    p = experiment("tournament", "three trained learners and a random agent")
    p.add_argument("--model", action="append", required=True, help="weight file, three times")
    p.add_argument("--games", type=int, help="joint training games")

    p = experiment("evaluate", "frozen agents, random agents on the empty seats")
    p.add_argument("--model", action="append", default=[], help="weight file, up to four")

    p = commands.add_parser("replay", help="re-run and verify recorded matches")
    p.add_argument("transcripts", help="transcripts.jsonl")

    commands.add_parser("catalog", help="print the 200-slot action catalog")
    return parser


def _overrides(args):
    experiment = {
        "eval_runs": args.eval_runs,
        "eval_games": args.eval_games,
        "generations": getattr(args, "generations", None),
    }
    games = getattr(args, "games", None)
    if args.command == "self-play":
        experiment["generation_games"] = games
    else:
        experiment["training_games"] = games
    overrides = {"experiment": {k: v for k, v in experiment.items() if v is not None}}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return overrides


PROTOCOL_OF = {
    "train-vs-random": "vs_random",
    "self-play": "vs_myself",
    "tournament": "vs_others",
    "evaluate": "vs_others",
}


def _load_models(paths):
    agents = []
    for i, path in enumerate(paths):
        agent = load_agent(path)
        # two files may hold agents of the same name
        if any(a.name == agent.name for a in agents):
            agent.name = f"{agent.name}-{i}"
        agents.append(agent)
    return agents


def train_vs_random(args, conf, config, telemetry):
    learner, summary = run_vs_random(args.agent, config, conf, telemetry)
    learner.save(os.path.join(args.out, f"{learner.name}.weights.json"))
    return summary.rows("vs_random", "eval")


def self_play(args, conf, config, telemetry):
    opponent = load_agent(args.opponent) if args.opponent else None
    pool = run_self_play(args.agent, config, conf, telemetry)
    for g, champion in enumerate(pool.champions):
        champion.save(os.path.join(args.out, f"{args.agent}-gen{g}.weights.json"))
    summary = run_generation_head_to_head(
        pool, config, telemetry, opponent=opponent, generations=args.head_to_head
    )
    return summary.rows("vs_myself", "head_to_head")


def tournament(args, conf, config, telemetry):
    if len(args.model) != NUM_SEATS - 1:
        raise InvalidArgumentError(f"tournament needs {NUM_SEATS - 1} --model files")
    learners = _load_models(args.model)
    before, after = run_vs_others(learners, config, telemetry)
    for agent in learners:
        agent.save(os.path.join(args.out, f"{agent.name}-after.weights.json"))
    return before.rows("vs_others", "before") + after.rows("vs_others", "after")


def evaluate_models(args, conf, config, telemetry):
    if len(args.model) > NUM_SEATS:
        raise InvalidArgumentError(f"at most {NUM_SEATS} --model files")
    agents = _load_models(args.model)
    agents += [RandomAgent(name=f"random{i}") for i in range(len(agents), NUM_SEATS)]
    summary = evaluate(
        agents,
        config.eval_runs,
        config.eval_games,
        split_seed(config.seed, "eval"),
        telemetry=telemetry,
        carry_roles=config.carry_roles,
        special_probability=config.special_probability,
    )
    return summary.rows("evaluate", "eval")


RUNNERS = {
    "train-vs-random": train_vs_random,
    "self-play": self_play,
    "tournament": tournament,
    "evaluate": evaluate_models,
}


def run(args):
    if args.command == "catalog":
        sys.stdout.write(catalog_csv())
        return
    if args.command == "replay":
        n = replay_transcripts(args.transcripts)
        print(f"{n} matches verified")
        return

    conf = load_conf(args.config, _overrides(args))
    config = ExperimentConfig.from_conf(conf, PROTOCOL_OF[args.command])
    mkdirp(args.out)
    telemetry = None if args.no_telemetry else Telemetry(args.out)
    rows = RUNNERS[args.command](args, conf, config, telemetry)
    write_results(os.path.join(args.out, "results.csv"), rows)
    if telemetry is not None:
        telemetry.write()
    logger.info("results written to %s", args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    init_log(console_level=args.log_level)
    try:
        run(args)
    except (ChefsHatError, OSError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
