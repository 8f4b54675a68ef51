from corpus.generator import generate_corpus
from pipeline.base import PipelineCommand


class Command(PipelineCommand):
    help = "Write a synthetic token corpus (tokens/, manifest.jsonl, corpus.json) from the [corpus] section."

    def add_command_arguments(self, parser):
        parser.add_argument("out_dir", help="Directory to write the corpus into.")

    def run(self, config, **options):
        manifest_path = generate_corpus(config.corpus, options["out_dir"])
        self.stdout.write(self.style.SUCCESS(f"Wrote {config.corpus.n_clips} clips, manifest {manifest_path}"))
