from pathlib import Path

from django.core.management.base import CommandError

from corpus.estimator import PlantedEstimator
from corpus.manifest import read_manifest
from metrics.evaluation import evaluate_system
from pipeline.base import PipelineCommand
from predictor.training import load_predictor


class Command(PipelineCommand):
    help = "Score a generated corpus: correlations with the conditioning emotion and fd against a reference corpus."

    def add_command_arguments(self, parser):
        parser.add_argument("gen_dir", help="Generated corpus directory.")
        parser.add_argument("reference", help="Reference corpus directory or manifest.")
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument("--predictor", help="Emotion predictor checkpoint.")
        source.add_argument(
            "--planted",
            action="store_true",
            help="Score with the planted-statistics estimator instead of a trained predictor.",
        )
        parser.add_argument("--report", required=True, help="MetricsReport JSON path.")
        parser.add_argument("--scatter", help="Per-clip CSV path (default: next to the report).")
        parser.add_argument("--name", help="System name in the report (default: generated directory name).")
        parser.add_argument("--eps", type=float, default=1e-6, help="Covariance regularisation for fd.")

    def run(self, config, **options):
        if options["eps"] < 0:
            raise CommandError("--eps must be non-negative.", returncode=2)
        reference = read_manifest(options["reference"])
        if options["planted"]:
            predictor = PlantedEstimator(reference.vocab_size)
        else:
            predictor = load_predictor(options["predictor"])

        report_path = Path(options["report"])
        scatter_path = options["scatter"] or report_path.with_suffix(".scatter.csv")
        report, _ = evaluate_system(
            options["gen_dir"],
            predictor,
            reference,
            eps=options["eps"],
            system_name=options["name"],
            report_path=report_path,
            scatter_path=scatter_path,
            window_config=config.window,
        )
        self.stdout.write(
            self.style.SUCCESS(
                f"{report.system_name}: fd={report.fd:.4f} r_a={report.r_a:.3f} r_v={report.r_v:.3f} "
                f"({report.n_clips} clips) -> {report_path}"
            )
        )
