"""Command-line entry points: train, eval, judge, ablate, serve."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

from .agents import AgentRole, ReflectMode
from .config import RunConfig
from .core import Explanation, ExplanationKind, NewsItem, Split
from .dataset import load_corpus, load_pool, sample_demos
from .evaluation import (
    BaselinePrompt,
    EvalRunSpec,
    JudgeSpec,
    StrategyDetector,
    ablation_pool_curve,
    ablation_table,
    dump_predictions,
    evaluate,
    judge_explanations,
    judge_table,
    to_table,
)
from .orchestrator import EventLog, RunState, Trainer

BASELINE_MODES = {mode.value: mode for mode in ReflectMode}


def _load_config(path: str, *, rounds: int | None, seed: int | None,
                 no_reflection: bool) -> RunConfig:
    config = RunConfig.from_file(path)
    loop = config.loop
    if rounds is not None:
        loop = dataclasses.replace(loop, rounds=rounds)
    if seed is not None:
        loop = dataclasses.replace(loop, seed=seed)
    if loop is not config.loop:
        config = dataclasses.replace(config, loop=loop)
    if no_reflection:
        config = dataclasses.replace(
            config, reflection=dataclasses.replace(config.reflection, enabled=False))
    return config


def _cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args.config, rounds=args.rounds, seed=args.seed,
                          no_reflection=args.no_reflection)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pool = load_pool(args.pool).items
    corpus = load_corpus(args.train)
    train_items = corpus.items(Split.TRAIN)
    demos = ()
    if config.reflection.enabled and config.reflection.mode.few_shot:
        demos = sample_demos(corpus, config.reflection.demo_count,
                             config.loop.seed)

    log = EventLog(out_dir / "events.jsonl")
    trainer = Trainer(config, log)
    ckpt_path = out_dir / "checkpoint.json"
    if args.resume:
        state = trainer.resume(args.resume)
        print(f"resumed run {state.run_id} at round {state.round_index}, "
              f"stage {state.stage.value}")
    else:
        state = trainer.new_state()
    state = trainer.train(state, pool, train_items, rounds=None, demos=demos)
    trainer.checkpoint(state, ckpt_path)
    log.close()
    print(f"run {state.run_id} finished: {state.round_index} adversarial rounds, "
          f"generator v{state.s_g.version}, detector v{state.s_d.version}")
    print(f"checkpoint: {ckpt_path}")
    print(f"event log:  {log.path}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config)
    corpus = load_corpus(args.corpus)
    split = Split(args.split)
    items = corpus.items(split)
    detector = config.agent(AgentRole.DETECTOR)

    if args.mode == "strategy":
        if not args.strategies:
            print("--strategies is required for strategy mode", file=sys.stderr)
            return 2
        state = RunState.from_dict(
            json.loads(Path(args.strategies).read_text(encoding="utf-8")))
        mode: StrategyDetector | BaselinePrompt = StrategyDetector(state.s_d)
    else:
        reflect_mode = BASELINE_MODES[args.mode]
        demos = ()
        if reflect_mode.few_shot:
            demos = tuple(sample_demos(corpus, args.demos, config.loop.seed))
        mode = BaselinePrompt(mode=reflect_mode, demos=demos)

    spec = EvalRunSpec(detector=detector, items=items, mode=mode,
                       parallelism=args.parallelism, seed=config.loop.seed)
    outcome = evaluate(spec)
    print(to_table([(args.mode, outcome)]))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(
            json.dumps(outcome.to_dict(), ensure_ascii=False, indent=2),
            encoding="utf-8")
        dump_predictions(out_dir / "predictions.jsonl", outcome.predictions)
        print(f"report written to {out_dir}")
    return 0


def _load_system_cases(path: str) -> list[tuple[NewsItem, Explanation]]:
    cases = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            try:
                item = NewsItem(id=record["id"], text=record["text"])
                explanation = Explanation(text=record["explanation"],
                                          kind=ExplanationKind.DETECTION)
            except (KeyError, ValueError) as err:
                raise ValueError(f"{path}:{lineno}: {err}") from err
            cases.append((item, explanation))
    return cases


def _cmd_judge(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config)
    systems = {Path(path).stem: _load_system_cases(path) for path in args.systems}
    spec = JudgeSpec(judge=config.agent(AgentRole.JUDGE), sample_size=args.sample)
    results = judge_explanations(spec, systems)
    print(judge_table(results))
    for name, result in results.items():
        if result.unscored:
            print(f"{name}: {len(result.unscored)} unscored item(s)")
    if args.out:
        payload = {
            name: {
                "report": result.report.to_dict() if result.report else None,
                "unscored": list(result.unscored),
            }
            for name, result in results.items()
        }
        Path(args.out).write_text(json.dumps(payload, ensure_ascii=False, indent=2),
                                  encoding="utf-8")
        print(f"scores written to {args.out}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _load_config(args.config, rounds=args.rounds, seed=None,
                          no_reflection=args.no_reflection)
    sizes = [int(part) for part in args.pool_sizes.split(",") if part.strip()]
    corpus = load_corpus(args.corpus)
    pool = load_pool(args.pool).items
    demos = ()
    if config.reflection.enabled and config.reflection.mode.few_shot:
        demos = sample_demos(corpus, config.reflection.demo_count, config.loop.seed)
    points = ablation_pool_curve(
        config, sizes, pool, corpus.items(Split.TRAIN), corpus.items(Split.TEST),
        event_log_dir=args.out, parallelism=args.parallelism, demos=demos)
    print(ablation_table(points))
    curve = [{"pool_size": p.pool_size,
              "report": p.outcome.report.to_dict() if p.outcome.report else None,
              "error_count": p.outcome.error_count}
             for p in points]
    out_path = Path(args.out) / "curve.json"
    out_path.write_text(json.dumps(curve, ensure_ascii=False, indent=2),
                        encoding="utf-8")
    print(f"curve written to {out_path}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = RunConfig.from_file(args.config)
    service_cfg = ServiceConfig(
        run=config,
        history_path=args.history,
        strategies_path=args.strategies,
        demo_corpus_manifest=args.demo_corpus,
        max_concurrency=args.max_concurrency,
        admin_token=args.admin_token,
        cors_origins=tuple(args.cors_origin or ()),
    )
    app = create_app(service_cfg)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="newsarena",
        description="Adversarial strategy training, evaluation, and serving "
                    "for explainable fake news detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the two training stages")
    p.add_argument("--config", required=True)
    p.add_argument("--rounds", type=int, default=None,
                   help="total adversarial round target (overrides config)")
    p.add_argument("--pool", required=True, help="real-news pool JSONL")
    p.add_argument("--train", required=True,
                   help="corpus manifest; its train split feeds reflection")
    p.add_argument("--no-reflection", action="store_true",
                   help="disable the self-reflection stage")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint file to resume")
    p.add_argument("--out", default="run", help="output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a detector on a corpus split")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", required=True,
                   choices=["strategy", *BASELINE_MODES])
    p.add_argument("--strategies", default=None,
                   help="training checkpoint (strategy mode)")
    p.add_argument("--corpus", required=True, help="corpus manifest")
    p.add_argument("--split", default="test", choices=["val", "test"])
    p.add_argument("--demos", type=int, default=4,
                   help="demo count for few-shot modes")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--out", default=None, help="directory for report dumps")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("judge", help="score explanation sets on the rubric")
    p.add_argument("--config", required=True)
    p.add_argument("--systems", nargs="+", required=True,
                   help="one JSONL of {id,text,explanation} per system")
    p.add_argument("--sample", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_judge)

    p = sub.add_parser("ablate", help="pool-size ablation curve")
    p.add_argument("--config", required=True)
    p.add_argument("--pool-sizes", required=True,
                   help="comma-separated ascending sizes, e.g. 0,100,500")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--no-reflection", action="store_true")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--out", default="ablation", help="output directory")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("serve", help="run the HTTP detection service")
    p.add_argument("--config", required=True)
    p.add_argument("--strategies", default=None,
                   help="training checkpoint to serve (omit for baseline-only)")
    p.add_argument("--history", default="submissions.jsonl")
    p.add_argument("--demo-corpus", default=None,
                   help="corpus manifest enabling few-shot methods")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-concurrency", type=int, default=8)
    p.add_argument("--admin-token", default=None)
    p.add_argument("--cors-origin", action="append", default=None)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:  # surface a clean one-liner, not a traceback
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
