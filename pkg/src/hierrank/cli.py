"""Command-line entry point: ``hierrank {train,eval,gradcheck,curves,synth}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .config import PROFILES, ConfigError, load_config
from .curves import emit_curves, mean_epochs
from .data import save_corpus, synth_corpus
from .evaluation import evaluate_corpus
from .gradcheck import grad_check
from .schemes import SCHEMES
from .train import load_checkpoint, load_corpora, run_seeds, train

log = logging.getLogger("hierrank")


def _config(args) -> "RunConfig":  # noqa: F821
    overrides = {"scheme": args.scheme, "profile": args.profile, "out_dir": args.out}
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    return load_config(args.config, **overrides)


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out_dir)
    summary = run_seeds(cfg, out_dir=out)
    print(json.dumps({k: summary[k] for k in ("scheme", "mean_test_map", "mean_test_mrr", "partial")}))
    return 1 if summary["partial"] else 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    seed = cfg.seeds[0]
    ckpt = Path(args.checkpoint or Path(cfg.out_dir) / f"model_seed{seed}.npz")
    model, saved_cfg = load_checkpoint(ckpt)
    corpora = load_corpora(saved_cfg)
    groups = getattr(corpora, args.split)
    report = evaluate_corpus(groups, model, {"scheme": model.scheme.name, "seed": seed,
                                             "split": args.split, "checkpoint": str(ckpt)})
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / f"eval_{args.split}_seed{seed}.json")
    print(json.dumps({"split": args.split, "map": report.map, "mrr": report.mrr,
                      "questions": report.n_questions}))
    return 0


def cmd_gradcheck(args) -> int:
    report = grad_check(seed=args.seed or 0)
    for case in report.cases:
        status = "PASS" if case.passed else "FAIL"
        print(f"{status} {case.name:24s} max rel err {case.max_rel_error:.3e} ({case.n_checked} entries)")
    print(f"{'PASS' if report.passed else 'FAIL'} overall in {report.seconds:.1f}s")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gradcheck.json").write_text(json.dumps(asdict(report), indent=2))
    return 0 if report.passed else 1


def cmd_curves(args) -> int:
    cfg = _config(args)
    baseline = cfg.replace(scheme="MTL", main_level="list", lambda_point=0.0, lambda_pair=0.0,
                           ablation="none")
    corpora = load_corpora(cfg)
    traces = {}
    for run_cfg in (cfg, baseline):
        for seed in cfg.seeds:
            _, trace = train(run_cfg, seed, corpora)
            traces[f"{trace.scheme}-seed{seed}"] = trace
    summary = emit_curves(traces, cfg.out_dir)
    by_scheme: dict[str, list] = {}
    for row in summary["rows"]:
        by_scheme.setdefault(row["run"].rsplit("-seed", 1)[0], []).append(row)
    means = {name: mean_epochs(rows) for name, rows in by_scheme.items()}
    print(json.dumps({"mean_epochs_to_dev_map": means, "threshold": summary["dev_threshold"]}))
    return 0


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = synth_corpus(cfg.synth_questions, cfg.synth_seed)
    for name, groups in zip(("train", "dev", "test"), splits):
        save_corpus(groups, out / f"{name}.jsonl")
    print(json.dumps({name: len(g) for name, g in zip(("train", "dev", "test"), splits)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierrank", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "train": (cmd_train, "train every configured seed and report test MAP/MRR"),
        "eval": (cmd_eval, "evaluate a saved checkpoint"),
        "gradcheck": (cmd_gradcheck, "finite-difference check of all schemes"),
        "curves": (cmd_curves, "loss curves for the scheme vs the list-only baseline"),
        "synth": (cmd_synth, "write the synthetic corpus as JSON lines"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML/JSON file of run settings")
        p.add_argument("--scheme", choices=SCHEMES)
        p.add_argument("--seed", type=int)
        p.add_argument("--profile", choices=PROFILES)
        p.add_argument("--out", help="output directory")
        if name == "eval":
            p.add_argument("--checkpoint")
            p.add_argument("--split", choices=("train", "dev", "test"), default="test")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
