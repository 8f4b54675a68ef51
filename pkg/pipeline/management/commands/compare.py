from metrics.evaluation import load_report, write_comparison
from pipeline.base import PipelineCommand


class Command(PipelineCommand):
    help = "Tabulate several MetricsReport files side by side as CSV and PDF."

    def add_command_arguments(self, parser):
        parser.add_argument("reports", nargs="+", help="MetricsReport JSON files, one row each.")
        parser.add_argument("--csv", help="Comparison CSV path.")
        parser.add_argument("--pdf", help="Comparison PDF path.")
        parser.add_argument("--title", default="Emotion-conditioned generation", help="Table title.")

    def run(self, config, **options):
        reports = [load_report(path) for path in options["reports"]]
        _, written = write_comparison(reports, options["csv"], options["pdf"], options["title"])
        for report in reports:
            self.stdout.write(
                f"{report.system_name:>24}  fd={report.fd:.4f}  r_a={report.r_a:.3f}  r_v={report.r_v:.3f}  "
                f"r2_a={report.r2_a:.3f}  r2_v={report.r2_v:.3f}"
            )
        for path in written:
            self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
