from dataclasses import replace

from pipeline.base import PipelineCommand
from pipeline.generation import generate_set
from trainer.generator import load_generator


class Command(PipelineCommand):
    help = "Sample clips from a generator checkpoint on an evenly spaced valence-arousal grid."

    def add_command_arguments(self, parser):
        parser.add_argument("checkpoint", help="Generator checkpoint.")
        parser.add_argument("out_dir", help="Directory for the generated corpus.")
        parser.add_argument("--grid", type=int, help="Grid points per axis (overrides generation.grid).")
        parser.add_argument("--per-point", type=int, help="Clips per grid point (overrides generation.per_point).")
        parser.add_argument("--length", type=int, help="Tokens per clip (overrides generation.length).")
        parser.add_argument(
            "--quantize",
            action="store_true",
            help="Condition on the nearest integer grid emotion instead of the exact coordinate.",
        )
        parser.add_argument("--temperature", type=float, help="Sampling temperature (overrides sampling.temperature).")
        parser.add_argument("--top-k", type=int, help="Top-k cut-off, 1 is greedy (overrides sampling.top_k).")

    def run(self, config, **options):
        job_overrides = {
            "grid": options["grid"],
            "per_point": options["per_point"],
            "length": options["length"],
            "quantize": options["quantize"] or None,
        }
        job = replace(config.generation, **{k: v for k, v in job_overrides.items() if v is not None})
        sampling_overrides = {"temperature": options["temperature"], "top_k": options["top_k"]}
        sampling = replace(config.sampling, **{k: v for k, v in sampling_overrides.items() if v is not None})

        generator, header = load_generator(options["checkpoint"])
        meta = {
            "extractor_seed": header["extractor_seed"],
            "checkpoint": str(options["checkpoint"]),
            "checkpoint_step": header["step"],
            "alpha": header["train"]["alpha"],
        }
        manifest_path = generate_set(generator, job, sampling, options["out_dir"], meta)
        self.stdout.write(self.style.SUCCESS(f"Wrote {job.n_clips} clips, manifest {manifest_path}"))
