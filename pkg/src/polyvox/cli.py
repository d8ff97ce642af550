"""Command-line entry points.

    polyvox weights  --manifest M --factor speaker|language|both
    polyvox plan     --strategy NAME --pool M --seed N --out M2 [--spec-file F]
    polyvox train    --config C --manifest M --stage pretrain|finetune|both
                     --seed N --out CKPT [--log L] [--progress]
    polyvox synth    --config C --checkpoint CKPT --language L --speaker S
                     --phonemes "sym sym ..." --out MEL
    polyvox serve    --experiment E --port P [--store DIR] [--ui DIR]
    polyvox report   --experiment E [--store DIR] --out DIR [--alpha A] [--margin K]
    polyvox demo     --out DIR [--with-corpus]

Model config files are JSON holding the acoustic model dimensions plus a
"phonesets" map (language -> phoneset file, relative to the config file).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import strategies as strategies_mod
from .acoustic import AcousticModel, ModelConfig
from .mushra import DEFAULT_ANOMALY_MARGIN, load_design
from .service import STORE_ENV_VAR, ExperimentStore, RatingService, serve
from .synthetic import make_demo_experiment, make_utterances, synthetic_phoneset, write_corpus
from .training import StageConfig, TrainPlan, finetune, pretrain
from .weighting import counts_from_manifest, build_table, format_table


def load_model_setup(config_path: str | Path) -> tuple[ModelConfig, dict[str, corpus_mod.Phoneset]]:
    """Read a model config file; phoneset sizes define the language map."""
    config_path = Path(config_path)
    raw = json.loads(config_path.read_text(encoding="utf-8"))
    raw.pop("plan", None)                  # training plan, not a model dimension
    phoneset_paths = raw.pop("phonesets", None)
    phonesets: dict[str, corpus_mod.Phoneset] = {}
    if phoneset_paths:
        for lang, rel in phoneset_paths.items():
            phonesets[lang] = corpus_mod.load_phoneset(config_path.parent / rel, lang)
    if "languages" not in raw:
        if not phonesets:
            raise SystemExit("model config needs 'languages' sizes or a 'phonesets' map")
        raw["languages"] = {lang: len(ps) for lang, ps in phonesets.items()}
    config = ModelConfig.from_dict(raw)
    for lang, ps in phonesets.items():
        if config.languages.get(lang) != len(ps):
            raise SystemExit(f"config says {config.languages.get(lang)} phonemes for "
                             f"{lang!r}, phoneset file has {len(ps)}")
    return config, phonesets


def cmd_weights(args) -> int:
    manifest = corpus_mod.load_manifest(args.manifest, check_files=not args.no_check)
    factors = ["speaker", "language"] if args.factor == "both" else [args.factor]
    blocks = []
    for factor in factors:
        table = build_table(counts_from_manifest(manifest, factor))
        blocks.append(format_table(table, factor))
    print("\n".join(blocks))
    return 0


def cmd_plan(args) -> int:
    if args.spec_file:
        spec = strategies_mod.load_spec_file(args.spec_file)
    else:
        if not args.strategy:
            raise SystemExit("pass --strategy NAME or --spec-file FILE")
        spec = strategies_mod.get_builtin(args.strategy)
    pool = corpus_mod.load_manifest(args.pool, check_files=not args.no_check)
    manifest = strategies_mod.materialize(spec, pool, args.seed)
    corpus_mod.save_manifest(args.out, manifest)
    counts = manifest.counts()
    print(f"{spec.name}: wrote {len(manifest)} utterances to {args.out}")
    for (speaker, language), n in sorted(counts.items()):
        print(f"  {speaker}/{language}: {n}")
    return 0


def _plan_from_config(raw: dict, seed: int, stage_overrides: dict) -> TrainPlan:
    plan_raw = dict(raw.get("plan", {}))
    stages = {}
    for key in ("stage1", "stage2"):
        merged = dict(plan_raw.get(key, {}))
        merged.update(stage_overrides.get(key, {}))
        defaults = TrainPlan().stage1 if key == "stage1" else TrainPlan().stage2
        stages[key] = StageConfig(**{**defaults.to_dict(), **merged})
    extras = {k: v for k, v in plan_raw.items() if k not in ("stage1", "stage2")}
    return TrainPlan(stage1=stages["stage1"], stage2=stages["stage2"], seed=seed, **extras)


def cmd_train(args) -> int:
    config, phonesets = load_model_setup(args.config)
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    overrides = {}
    if args.steps1 is not None:
        overrides.setdefault("stage1", {})["steps"] = args.steps1
    if args.steps2 is not None:
        overrides.setdefault("stage2", {})["steps"] = args.steps2
    plan = _plan_from_config(raw, args.seed, overrides)
    manifest = corpus_mod.load_manifest(args.manifest)
    utterances = corpus_mod.load_utterances(manifest, phonesets)

    from .weighting import weights_from_manifest
    mode = args.weighting
    if mode == "auto":
        mode = "both" if len(manifest.languages()) > 1 else "speaker"
    weights = None if mode == "none" else weights_from_manifest(manifest, mode)

    if args.resume:
        model = AcousticModel.load(args.resume, config)
    else:
        model = AcousticModel(config, seed=args.seed)

    logs = []
    if args.stage in ("pretrain", "both"):
        logs.append(pretrain(model, utterances, plan, weights, progress=args.progress))
    if args.stage in ("finetune", "both"):
        logs.append(finetune(model, utterances, plan, weights, progress=args.progress))
    model.save(args.out)
    if args.log:
        for i, log in enumerate(logs):
            log.write_jsonl(args.log, append=i > 0)
    final = logs[-1].losses()[-1] if logs and logs[-1].records else float("nan")
    print(f"trained stages [{args.stage}]; final loss {final:.5f}; checkpoint: {args.out}")
    return 0


def cmd_synth(args) -> int:
    config, phonesets = load_model_setup(args.config)
    model = AcousticModel.load(args.checkpoint, config)
    ps = phonesets.get(args.language)
    if ps is None:
        raise SystemExit(f"no phoneset for language {args.language!r} in config")
    phonemes = corpus_mod.encode_phonemes(args.phonemes.split(), ps)
    mel, truncated = model.synthesize(phonemes, args.language, args.speaker,
                                      max_frames=args.max_frames)
    corpus_mod.write_mel(args.out, mel)
    note = " (truncated at max frames)" if truncated else ""
    print(f"synthesized {mel.shape[0]} frames to {args.out}{note}")
    return 0


def _store_path(args, design_name: str) -> Path:
    store_dir = args.store or os.environ.get(STORE_ENV_VAR) or "mushra-store"
    return Path(store_dir) / f"{design_name}.jsonl"


def cmd_serve(args) -> int:
    design = load_design(args.experiment)
    store = _store_path(args, design.name)
    server = serve(design, store, args.port, ui_dir=args.ui)
    host, port = server.server_address[:2]
    print(f"serving experiment {design.name!r} on http://{host}:{port}/ (store: {store})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down")
        server.shutdown()
    return 0


def cmd_report(args) -> int:
    from .report import write_report_files
    from .mushra import build_report, filter_anomalies

    design = load_design(args.experiment)
    store = ExperimentStore(_store_path(args, design.name))
    service = RatingService(design, store)
    records = service.scored_records()
    if not records:
        print("no rating records in store", file=sys.stderr)
        return 1
    kept, discarded = filter_anomalies(records, design.resynthesis, args.margin)
    systems = list(design.all_systems())
    report = build_report(kept, systems, alpha=args.alpha, discarded=len(discarded))
    paths = write_report_files(args.out, report, kept, systems,
                               title=f"Naturalness: {design.name}")
    print(f"{len(records)} records, {len(discarded)} discarded as anomalies")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def cmd_demo(args) -> int:
    out = Path(args.out)
    config_path = make_demo_experiment(out / "experiment")
    print(f"demo experiment: {config_path}")
    if args.with_corpus:
        langs = {"en": 12, "nl": 12}
        phonesets = {lang: synthetic_phoneset(lang, size) for lang, size in langs.items()}
        utts = []
        utts += make_utterances("target", "en", phonesets["en"], 20, seed=11, mel_bins=20)
        utts += make_utterances("aux-nl-1", "nl", phonesets["nl"], 20, seed=12, mel_bins=20)
        manifest_path = write_corpus(out / "corpus", utts, phonesets)
        model_cfg = {
            "speakers": ["target", "aux-nl-1"],
            "embedding_dim": 16, "prenet_layers": 2, "prenet_kernel": 3,
            "buffer_size": 10, "buffer_dim": 16, "recurrency_layers": 2,
            "recurrency_width": 24, "mel_bins": 20, "attention_hidden": 16,
            "speaker_dim": 8, "update_hidden": 24, "output_hidden": 24,
            "attention_step_scale": 0.25,
            "phonesets": {"en": "../corpus/phonesets/en.phones",
                          "nl": "../corpus/phonesets/nl.phones"},
            "plan": {"stage1": {"steps": 300, "batch_size": 8, "learning_rate": 0.02},
                     "stage2": {"steps": 300, "batch_size": 8, "learning_rate": 2e-3}},
        }
        cfg_dir = out / "model"
        cfg_dir.mkdir(parents=True, exist_ok=True)
        (cfg_dir / "config.json").write_text(json.dumps(model_cfg, indent=2) + "\n",
                                             encoding="utf-8")
        print(f"demo corpus:     {manifest_path}")
        print(f"model config:    {cfg_dir / 'config.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyvox",
                                     description="multilingual acoustic-model workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", help="print class weight tables for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--factor", choices=["speaker", "language", "both"], default="both")
    p.add_argument("--no-check", action="store_true", help="skip referenced-file checks")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("plan", help="materialize a data-combination strategy")
    p.add_argument("--strategy", help="builtin strategy name")
    p.add_argument("--spec-file", help="custom strategy spec file")
    p.add_argument("--pool", required=True, help="pool manifest to sample from")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output manifest path")
    p.add_argument("--no-check", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("train", help="two-stage training")
    p.add_argument("--config", required=True, help="model config JSON")
    p.add_argument("--manifest", required=True)
    p.add_argument("--stage", choices=["pretrain", "finetune", "both"], default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", help="training log JSONL path")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--weighting", choices=["auto", "speaker", "language", "both", "none"],
                   default="auto")
    p.add_argument("--steps1", type=int, help="override stage 1 step count")
    p.add_argument("--steps2", type=int, help="override stage 2 step count")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="free-running synthesis to a mel file")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--language", required=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--phonemes", required=True, help="space-separated phoneme symbols")
    p.add_argument("--max-frames", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the rating service")
    p.add_argument("--experiment", required=True, help="experiment config JSON")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--store", help=f"store directory (default ${STORE_ENV_VAR} or ./mushra-store)")
    p.add_argument("--ui", help="directory with built UI files to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="analyze stored ratings, render tables and boxplot")
    p.add_argument("--experiment", required=True)
    p.add_argument("--store", help=f"store directory (default ${STORE_ENV_VAR} or ./mushra-store)")
    p.add_argument("--out", required=True, help="output directory for report files")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--margin", type=int, default=DEFAULT_ANOMALY_MARGIN)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("demo", help="generate a demo experiment (and optional corpus)")
    p.add_argument("--out", required=True)
    p.add_argument("--with-corpus", action="store_true")
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
