"""Command-line entry point for the whole pipeline.

Subcommands: lexicon prepare, train, evolve, eval, transcribe, serve.
Machine-readable artifacts go to files; human summaries go to stdout. Exit
codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import evolution, figures, lexicon as lx, metrics, training
from .errors import G2PStudioError
from .g2p_models import (
    build_model,
    genome_from_dict,
    genome_to_dict,
    greedy_decode,
    load_checkpoint,
    param_count,
)

USAGE_EXIT, RUNTIME_EXIT = 1, 2


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("formatter_class",
                          argparse.ArgumentDefaultsHelpFormatter)
        super().__init__(*args, **kwargs)

    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _log_config(args: argparse.Namespace) -> None:
    cfg = {k: (str(v) if isinstance(v, Path) else v)
           for k, v in vars(args).items() if k != "func"}
    print(f"config: {json.dumps(cfg, ensure_ascii=False)}", file=sys.stderr)


def _timestamp(args) -> dict:
    if getattr(args, "no_timestamps", False):
        return {}
    return {"generated_at": datetime.now(timezone.utc).isoformat()}


def _load_genome(path: str):
    return genome_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- subcommand implementations ---

def cmd_lexicon_prepare(args) -> int:
    spec = lx.LanguageSpec.from_json_file(args.spec)
    if args.cmudict:
        lex = lx.load_cmudict(args.cmudict, spec)
    else:
        lex = lx.load_wiktionary_tsv(args.input, spec)
    n_raw = len(lex.entries)
    if args.no_filter:
        filtered, report = lex, None
    else:
        filtered, report = lx.apply_filters(lex)
    filtered.save(args.out)
    print(f"loaded {n_raw} entries "
          f"({lex.collapsed_duplicates} duplicate pairs collapsed, "
          f"{lex.stress_symbols_stripped} stress symbols stripped)")
    if report is not None:
        print(f"filtered: -{report.removed_bad_grapheme} bad grapheme, "
              f"-{report.removed_length_ratio} over-length, "
              f"-{report.removed_rare_phoneme} rare phoneme "
              f"-> {report.surviving_entries} entries")
        if args.report:
            Path(args.report).write_text(report.to_json(), encoding="utf-8")
    print(f"phonemes: {len(filtered.phoneme_counts)} distinct")
    print(f"wrote {args.out}")
    if args.split_test is not None:
        train_lex, test_lex = lx.split_train_test(
            filtered, args.split_test, args.split_seed)
        base = Path(args.out)
        train_path = base.with_suffix(".train.json")
        test_path = base.with_suffix(".test.json")
        train_lex.save(train_path)
        test_lex.save(test_path)
        print(f"split {len(train_lex)}/{len(test_lex)} -> "
              f"{train_path}, {test_path}")
    return 0


def cmd_train(args) -> int:
    lex = lx.Lexicon.load(args.lexicon)
    genome = _load_genome(args.genome)
    if genome.architecture != args.arch:
        raise G2PStudioError(
            f"genome is for {genome.architecture!r}, --arch says {args.arch!r}")
    g_vocab, p_vocab = lx.build_vocabularies(lex)
    model = build_model(genome, g_vocab, p_vocab, max_len=args.max_len,
                        seed=args.seed)
    print(f"built {args.arch} model: {param_count(model)} trainable parameters")
    config = training.TrainConfig(
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        early_stop=not args.no_early_stop,
        checkpoint_every=args.checkpoint_every,
        checkpoint_path=args.out,
    )
    t0 = time.monotonic()
    _, history = training.train(model, lex, config)
    dt = time.monotonic() - t0
    stopped = "early-stopped" if history.stopped_early else "ran to max epochs"
    print(f"{history.steps_run} steps in {dt:.1f}s ({stopped}); "
          f"final loss {history.losses[-1]:.4f}")
    if args.history:
        history.to_csv(args.history)
        summary_path = Path(args.history).with_suffix(".summary.json")
        history.save_summary(summary_path)
        print(f"wrote {args.history} and {summary_path}")
    if args.figures:
        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        p = figures.save_loss_curve(history.losses, fig_dir / "loss_curve.png")
        print(f"wrote {p}")
    print(f"wrote {args.out}")
    return 0


def cmd_evolve(args) -> int:
    lex = lx.Lexicon.load(args.lexicon)
    config = evolution.EsConfig(
        population_size=args.population,
        generations=args.generations,
        fitness_epochs=args.fitness_epochs,
        fitness_holdout=args.holdout,
        train_cap=args.train_cap,
        seed=args.seed,
        jobs=args.jobs,
        max_len=args.max_len,
    )
    t0 = time.monotonic()
    best, records = evolution.run_es(lex, args.arch, config)
    dt = time.monotonic() - t0
    print(f"{len(records)} evaluations in {dt:.1f}s; "
          f"best WER {best.fitness_wer:.2f}% / PER {best.fitness_per:.2f}% "
          f"({best.param_count} params, born gen {best.generation_born})")
    Path(args.out).write_text(
        json.dumps(genome_to_dict(best.genome), indent=2), encoding="utf-8")
    print(f"wrote {args.out}")
    if args.log:
        evolution.save_generation_log(records, args.log)
        print(f"wrote {args.log}")
    if args.figures:
        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        p = figures.save_es_progress(records, fig_dir / "es_progress.png")
        print(f"wrote {p}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.ckpt)
    lex = lx.Lexicon.load(args.lexicon)
    t0 = time.monotonic()
    report = training.evaluate(model, lex)
    dt = time.monotonic() - t0
    rate = report.n_words / dt if dt > 0 else float("inf")
    print(report.to_table())
    print(f"\n{report.n_words} words in {dt:.2f}s ({rate:.0f} words/s)")
    payload = report.to_dict()
    payload.update(_timestamp(args))
    Path(args.report).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
    print(f"wrote {args.report}")
    if args.figures:
        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        p = figures.save_eval_histogram(report, fig_dir / "eval_distances.png")
        print(f"wrote {p}")
    return 0


def cmd_transcribe(args) -> int:
    from .studio_service import Transcriber

    model = load_checkpoint(args.ckpt)
    lex = lx.Lexicon.load(args.lexicon) if args.lexicon else None
    transcriber = Transcriber(language=args.language, model=model, lexicon=lex)
    if args.text is not None:
        texts = [args.text]
    else:
        texts = Path(args.file).read_text(encoding="utf-8").splitlines()
    t0 = time.monotonic()
    n_words = 0
    for text in texts:
        if not text.strip():
            continue
        for item in transcriber.transcribe(text):
            print(f"{item['word']}\t{' '.join(item['phonemes'])}\t{item['source']}")
            n_words += 1
    dt = time.monotonic() - t0
    rate = n_words / dt if dt > 0 else float("inf")
    print(f"# {n_words} words in {dt:.2f}s ({rate:.0f} words/s)", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .studio_service import (
        SessionConfig,
        StudioSession,
        Transcriber,
        create_app,
        load_prompts,
    )

    config = SessionConfig.from_json_file(args.config)
    prompts = load_prompts(args.prompts, args.phonetics)
    transcriber = None
    if args.ckpt:
        model = load_checkpoint(args.ckpt)
        lex = lx.Lexicon.load(args.lexicon) if args.lexicon else None
        transcriber = Transcriber(language=args.language, model=model, lexicon=lex)
    session = StudioSession(config, prompts, transcriber)
    app = create_app(session, static_dir=args.static)
    print(f"serving {len(prompts)} prompts from {config.storage_dir} "
          f"on http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --- parser wiring ---

def build_parser() -> _Parser:
    parser = _Parser(prog="g2pstudio", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_lex = sub.add_parser("lexicon", help="lexicon operations")
    lex_sub = p_lex.add_subparsers(dest="lexicon_command", required=True,
                                   parser_class=_Parser)
    p_prep = lex_sub.add_parser("prepare", help="load, clean and filter a lexicon")
    src = p_prep.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="input", help="word<TAB>ipa TSV file")
    src.add_argument("--cmudict", help="CMU dictionary 0.7b file")
    p_prep.add_argument("--spec", required=True, help="LanguageSpec JSON file")
    p_prep.add_argument("--out", required=True, help="output lexicon JSON")
    p_prep.add_argument("--report", help="FilterReport JSON path")
    p_prep.add_argument("--no-filter", action="store_true",
                        help="skip filtering, keep the raw lexicon")
    p_prep.add_argument("--split-test", type=float, default=None,
                        help="also write a train/test split at this fraction")
    p_prep.add_argument("--split-seed", type=int, default=0)
    p_prep.set_defaults(func=cmd_lexicon_prepare)

    p_train = sub.add_parser("train", help="train a model from a genome")
    p_train.add_argument("--lexicon", required=True,
                         help="prepared lexicon JSON")
    p_train.add_argument("--arch", required=True,
                         choices=["cnn", "transformer"],
                         help="model architecture")
    p_train.add_argument("--genome", required=True, help="genome JSON file")
    p_train.add_argument("--out", required=True, help="checkpoint path")
    p_train.add_argument("--epochs", type=int, default=100,
                         help="maximum training epochs")
    p_train.add_argument("--batch-size", type=int, default=None,
                         help="override the genome batch gene")
    p_train.add_argument("--lr", type=float, default=1e-3,
                         help="learning rate")
    p_train.add_argument("--seed", type=int, default=0,
                         help="RNG seed (init, shuffling, dropout)")
    p_train.add_argument("--max-len", type=int, default=64,
                         help="maximum sequence length")
    p_train.add_argument("--no-early-stop", action="store_true",
                         help="disable the loss-plateau early stop")
    p_train.add_argument("--checkpoint-every", type=int, default=None,
                         help="also checkpoint every N epochs")
    p_train.add_argument("--history", help="per-step loss CSV path")
    p_train.add_argument("--figures", help="directory for PNG figures")
    p_train.set_defaults(func=cmd_train)

    p_ev = sub.add_parser("evolve", help="evolution-strategy genome search")
    p_ev.add_argument("--lexicon", required=True,
                      help="prepared lexicon JSON")
    p_ev.add_argument("--arch", required=True,
                      choices=["cnn", "transformer"],
                      help="model architecture to search")
    p_ev.add_argument("--out", required=True, help="best genome JSON path")
    p_ev.add_argument("--log", help="generation log JSONL path")
    p_ev.add_argument("--population", type=int, default=10,
                      help="genomes per generation")
    p_ev.add_argument("--generations", type=int, default=10,
                      help="number of generations")
    p_ev.add_argument("--fitness-epochs", type=int, default=20,
                      help="training epochs per fitness evaluation")
    p_ev.add_argument("--holdout", type=int, default=500,
                      help="shared fitness holdout size")
    p_ev.add_argument("--train-cap", type=int, default=150_000,
                      help="cap on lexicon entries used by the search")
    p_ev.add_argument("--seed", type=int, default=0,
                      help="run seed; per-evaluation seeds derive from it")
    p_ev.add_argument("--jobs", type=int, default=1,
                      help="concurrent fitness evaluations")
    p_ev.add_argument("--max-len", type=int, default=64,
                      help="maximum sequence length")
    p_ev.add_argument("--figures", help="directory for PNG figures")
    p_ev.set_defaults(func=cmd_evolve)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a lexicon")
    p_eval.add_argument("--ckpt", required=True,
                        help="model checkpoint to evaluate")
    p_eval.add_argument("--lexicon", required=True,
                        help="test lexicon JSON")
    p_eval.add_argument("--report", required=True, help="EvalReport JSON path")
    p_eval.add_argument("--figures", help="directory for PNG figures")
    p_eval.add_argument("--no-timestamps", action="store_true",
                        help="omit timestamps for byte-identical reruns")
    p_eval.set_defaults(func=cmd_eval)

    p_tr = sub.add_parser("transcribe", help="G2P-transcribe text")
    p_tr.add_argument("--ckpt", required=True,
                      help="model checkpoint for out-of-lexicon words")
    p_tr.add_argument("--lexicon", help="lexicon JSON for exact lookups")
    p_tr.add_argument("--language", default="xx",
                      help="language tag reported by the transcriber")
    grp = p_tr.add_mutually_exclusive_group(required=True)
    grp.add_argument("--text", help="text to transcribe")
    grp.add_argument("--file", help="file with one line of text per prompt")
    p_tr.set_defaults(func=cmd_transcribe)

    p_srv = sub.add_parser("serve", help="run the recording-session service")
    p_srv.add_argument("--config", required=True, help="SessionConfig JSON")
    p_srv.add_argument("--prompts", required=True, help="one prompt per line")
    p_srv.add_argument("--phonetics", help="aligned phonetic sidecar file")
    p_srv.add_argument("--ckpt", help="G2P checkpoint for /api/transcribe")
    p_srv.add_argument("--lexicon", help="lexicon JSON for exact lookups")
    p_srv.add_argument("--language", default="xx",
                       help="language served by /api/transcribe")
    p_srv.add_argument("--static", help="directory with the browser UI build")
    p_srv.add_argument("--host", default="127.0.0.1", help="bind address")
    p_srv.add_argument("--port", type=int, default=8765, help="bind port")
    p_srv.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _log_config(args)
    try:
        return args.func(args)
    except (G2PStudioError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
