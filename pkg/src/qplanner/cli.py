"""Command-line entry point: ``qplanner {train,eval,infer,gen-synthetic,inspect}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from qplanner.actor import ActorModel, provider_from_descriptor
from qplanner.envs import gen_synthetic, load_templates, make_env, rollout
from qplanner.errors import PlannerError
from qplanner.evaluation import (
    FILTER_PRESETS,
    FixedSequencePolicy,
    LearnedPolicy,
    RandomPolicy,
    evaluate_policy,
    write_report_csv,
    write_report_json,
)
from qplanner.io import ingest, load_run_config, make_executor, record_to_sample, write_dataset
from qplanner.mdp import TaskKind
from qplanner.trainer import load_checkpoint, run_training, save_checkpoint

log = logging.getLogger("qplanner")


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False)


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    out = Path(args.out) if args.out else cfg.output_dir
    if out is None:
        raise PlannerError("no output directory: pass --out or set output_dir in the config")
    if cfg.datasets:
        sets = [ingest(p, cfg.kind, skip_short=True).records for p in cfg.datasets]
    else:
        syn = cfg.synthetic
        sets = [gen_synthetic(int(syn["k"]), int(syn["n_samples"]), int(syn.get("seed", cfg.seed)))]
    env = make_env(cfg.kind, load_templates(cfg.templates), cfg.reward_mode)
    actor = ActorModel(provider_from_descriptor(cfg.provider))
    ckpt, report = run_training(sets, env, make_executor(cfg.executor), actor, cfg.train)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out / "checkpoint.json")
    (out / "report.json").write_text(_dump(report.to_dict()) + "\n", encoding="utf-8")
    # Wall time lives apart from the report so reports stay byte-reproducible.
    (out / "timing.json").write_text(_dump({"wall_time": report.wall_time}) + "\n", encoding="utf-8")
    print(f"trained {report.env_steps} steps, {report.learn_steps} learn steps -> {out}")
    return 0


def _runtime(args, kind: Optional[str]):
    """Kind, environment and executor from the optional config and flags."""
    cfg = load_run_config(args.config) if args.config else None
    kind = args.kind or kind or (cfg.kind.value if cfg else None)
    if kind is None:
        raise PlannerError("task kind unknown: pass --kind or a checkpoint")
    templates = load_templates(cfg.templates if cfg else None)
    env = make_env(kind, templates, cfg.reward_mode if cfg else None)
    executor = make_executor(cfg.executor if cfg else None)
    return TaskKind(kind), env, executor


def cmd_eval(args) -> int:
    actor, ckpt = (load_checkpoint(args.checkpoint) if args.checkpoint else (None, {}))
    kind, env, executor = _runtime(args, ckpt.get("kind"))
    if args.policy == "learned":
        if actor is None:
            raise PlannerError("the learned policy needs --checkpoint")
        policy = LearnedPolicy(actor)
    elif args.policy == "random":
        policy = RandomPolicy(args.seed)
    else:
        policy = FixedSequencePolicy(args.order)
    data = ingest(args.dataset, kind, skip_short=True)
    flt = FILTER_PRESETS[args.filter] if args.filter else None
    meta = {"policy": args.policy, "seed": args.seed, "dataset": str(args.dataset),
            "language": data.language}
    report = evaluate_policy(policy, data.records, env, executor, flt, meta)
    if args.out:
        write_report_json(report, args.out)
    else:
        print(_dump(report.to_dict()))
    if args.csv:
        write_report_csv([report], args.csv)
    return 0


def cmd_infer(args) -> int:
    actor, ckpt = load_checkpoint(args.checkpoint)
    kind, env, executor = _runtime(args, ckpt.get("kind"))
    rec = json.loads(Path(args.sample).read_text(encoding="utf-8"))
    sample = record_to_sample(rec, kind)
    trace, state = rollout(env, sample, executor, LearnedPolicy(actor))
    final = env.final_result(state, sample)
    print(_dump({
        "id": sample.sample_id,
        "order": [{"action_id": a.action_id, "surface": a.surface} for a in trace.actions],
        "final_result": {str(k): v for k, v in final.items()} if isinstance(final, dict) else final,
    }))
    return 0


def cmd_gen_synthetic(args) -> int:
    samples = gen_synthetic(args.k, args.n, args.seed, prefix=args.prefix)
    write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_inspect(args) -> int:
    _, ckpt = load_checkpoint(args.checkpoint)
    import numpy as np

    w = np.array(ckpt["W"])
    eps = ckpt.get("epsilon") or {}
    lines = [
        f"checkpoint   {args.checkpoint}",
        f"task kind    {ckpt['kind']}",
        f"provider     {ckpt['provider']}",
        f"dimension    {ckpt['dimension']}",
        f"|W|          {np.linalg.norm(w):.6f}",
        f"b            {ckpt['b']:.6f}",
        f"target b     {ckpt['target_b']:.6f}",
        f"learn steps  {ckpt['learn_steps']}",
        f"env steps    {ckpt['env_steps']}",
        f"epsilon step {eps.get('step', 'n/a')}",
        f"seed         {ckpt['seed']}",
    ]
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qplanner", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an actor head")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    kinds = [k.value for k in TaskKind]
    p = sub.add_parser("eval", help="evaluate a policy on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--policy", choices=["learned", "random", "fixed"], default="learned")
    p.add_argument("--order", nargs="+", help="action surfaces by priority for --policy fixed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=kinds)
    p.add_argument("--config")
    p.add_argument("--filter", choices=sorted(FILTER_PRESETS))
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="plan and execute one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--kind", choices=kinds)
    p.add_argument("--config")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("gen-synthetic", help="write a synthetic ordering dataset")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", default="syn")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("inspect", help="summarize a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PlannerError, OSError, ValueError, KeyError) as exc:
        print(f"qplanner {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
