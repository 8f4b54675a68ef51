import argparse
from dataclasses import replace
from pathlib import Path

from django.core.management.base import CommandError

from corpus.manifest import read_manifest
from pipeline.base import PipelineCommand, add_global_arguments
from predictor.training import save_predictor, train_predictor
from trainer.training import resume, train_generator


class Command(PipelineCommand):
    help = "Train the emotion-conditioned generator (lm) or the emotion predictor (predictor)."

    def add_command_arguments(self, parser):
        subparsers = parser.add_subparsers(dest="target", required=True, metavar="{lm,predictor}")

        lm = subparsers.add_parser("lm", help="Generator under ce + alpha * lara.")
        lm.add_argument("corpus", help="Training corpus directory or manifest.")
        lm.add_argument("--out", required=True, help="Checkpoint path to write.")
        lm.add_argument("--alpha", type=float, help="Alignment weight; 0 trains with cross-entropy only.")
        lm.add_argument("--steps", type=int, help="Optimisation steps (overrides train.steps).")
        lm.add_argument("--log", help="JSON-lines training log path.")
        lm.add_argument("--resume", help="Continue from this checkpoint instead of starting fresh.")
        lm.add_argument("--save-every", type=int, help="Write last.ckpt next to --out every N steps (default train.eval_every; 0 disables).")
        add_global_arguments(lm, default=argparse.SUPPRESS)

        predictor = subparsers.add_parser("predictor", help="Emotion predictor regression head.")
        predictor.add_argument("corpus", help="Training corpus directory or manifest.")
        predictor.add_argument("--out", required=True, help="Checkpoint path to write.")
        predictor.add_argument("--val-corpus", help="Held-out corpus; default holds out predictor.val_clips clips.")
        predictor.add_argument("--log", help="JSON-lines training log path.")
        add_global_arguments(predictor, default=argparse.SUPPRESS)

    def run(self, config, **options):
        manifest = read_manifest(options["corpus"])
        out = Path(options["out"])
        if options["target"] == "lm":
            self.train_lm(config, manifest, out, options)
        else:
            self.train_predictor(config, manifest, out, options)

    def train_lm(self, config, manifest, out, options):
        if options["resume"]:
            for flag in ("alpha", "save_every"):
                if options[flag] is not None:
                    raise CommandError(f"--{flag.replace('_', '-')} cannot change a resumed run.", returncode=2)
            trainer, _ = resume(
                options["resume"], manifest, options["steps"] or 0, log_path=options["log"], out_dir=out.parent
            )
        else:
            cfg = config.train
            overrides = {
                "alpha": options["alpha"],
                "steps": options["steps"],
                "save_every": options["save_every"],
            }
            cfg = replace(cfg, **{key: value for key, value in overrides.items() if value is not None})
            trainer, _ = train_generator(
                manifest,
                cfg,
                backbone_config=config.backbone,
                conditioning_config=config.conditioning,
                proxy_config=config.proxy,
                window_config=config.window,
                log_path=options["log"],
                out_dir=out.parent,
            )
        trainer.save(out)
        self.stdout.write(self.style.SUCCESS(f"Generator at step {trainer.step} saved to {out}"))

    def train_predictor(self, config, manifest, out, options):
        val_manifest = read_manifest(options["val_corpus"]) if options["val_corpus"] else None
        predictor, log = train_predictor(
            manifest,
            config.predictor,
            window_config=config.window,
            val_manifest=val_manifest,
            log_path=options["log"],
        )
        save_predictor(out, predictor, log)
        self.stdout.write(
            self.style.SUCCESS(
                f"Predictor (best step {predictor.meta['best_step']}, "
                f"val CCC {predictor.meta['best_val_ccc']:.3f}) saved to {out}"
            )
        )
