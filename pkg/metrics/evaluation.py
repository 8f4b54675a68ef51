"""
Benchmark evaluation of a generated clip set.

The predictor scores every generated clip and the scores are compared with the
emotion each clip was conditioned on. The distribution distance `fd` compares
clip-mean extractor features of the generated and reference sets.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from affect.emotion import denormalize_av
from commons.exceptions import DegenerateInputError, EvaluationError, LaraGenError
from commons.renderer import CsvRenderer, PdfRenderer, ReportJsonRenderer
from commons.timing import timed
from corpus.manifest import read_manifest
from extractor.features import get_extractor
from metrics.schemas import COMPARISON_COLUMNS, REPORT_SCHEMA, SCATTER_COLUMNS
from metrics.statistics import frechet_distance, pearson_r, r_squared
from predictor.losses import ccc

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    system_name: str
    fd: float
    r_a: float
    r_v: float
    r2_a: float
    r2_v: float
    ccc_a: float
    ccc_v: float
    n_clips: int
    seed: int

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, data):
        jsonschema.validate(data, REPORT_SCHEMA)
        return cls(**data)


@dataclass
class ScatterDump:
    rows: list = field(default_factory=list)

    def add(self, clip_id, v_true, a_true, v_pred, a_pred):
        self.rows.append(
            {
                "clip_id": clip_id,
                "v_true": float(v_true),
                "a_true": float(a_true),
                "v_pred": float(v_pred),
                "a_pred": float(a_pred),
            }
        )

    def column(self, name):
        return np.array([row[name] for row in self.rows], dtype=np.float64)

    def __len__(self):
        return len(self.rows)

    def to_payload(self):
        return {"columns": SCATTER_COLUMNS, "rows": self.rows}


def _write_bytes(path, content):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(content)
    return path


def write_report(path, report):
    data = report.to_json()
    jsonschema.validate(data, REPORT_SCHEMA)
    return _write_bytes(path, ReportJsonRenderer().render(data))


def load_report(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise EvaluationError(f"Cannot read report {path}: {exc}") from exc
    try:
        return MetricsReport.from_json(data)
    except jsonschema.ValidationError as exc:
        raise EvaluationError(f"Report {path} does not match the report schema: {exc.message}") from exc


def write_scatter(path, scatter):
    return _write_bytes(path, CsvRenderer().render(scatter.to_payload()))


def clip_mean_features(manifest, extractor, records=None):
    records = manifest.records if records is None else records
    return np.stack(
        [extractor.extract(manifest.load_tokens(record)).features.mean(axis=0) for record in records]
    )


def _axis_metrics(scatter, axis):
    truth, pred = scatter.column(f"{axis}_true"), scatter.column(f"{axis}_pred")
    try:
        return pearson_r(truth, pred), r_squared(truth, pred), ccc(truth, pred)
    except DegenerateInputError as exc:
        name = "valence" if axis == "v" else "arousal"
        raise EvaluationError(f"Cannot score the {name} axis: {exc}") from exc


def _resolve_extractor(predictor, gen_manifest, window_config):
    generated_seed = gen_manifest.meta.get("extractor_seed")
    predictor_seed = getattr(predictor, "extractor_seed", None)
    if generated_seed is not None and predictor_seed is not None and generated_seed != predictor_seed:
        raise EvaluationError(
            f"Extractor seed mismatch: predictor uses {predictor_seed}, "
            f"generated clips were produced against {generated_seed}."
        )
    extractor = getattr(predictor, "extractor", None)
    if extractor is not None:
        return extractor
    return get_extractor(gen_manifest.vocab_size, window_config, generated_seed)


def evaluate_system(
    gen_dir,
    predictor,
    reference_manifest,
    eps=1e-6,
    system_name=None,
    seed=None,
    report_path=None,
    scatter_path=None,
    window_config=None,
):
    """
    Score a generated corpus directory.

    `predictor` is anything with `predict_tokens(tokens) -> NormalizedEmotion`
    and an `extractor_seed` (an `EmotionPredictor` or a `PlantedEstimator`).
    Clips that cannot be read or scored are excluded and counted. Nothing is
    written unless at least one clip is evaluated.
    """
    gen_manifest = read_manifest(gen_dir, check_files=False, strict=False)
    if isinstance(reference_manifest, (str, Path)):
        reference_manifest = read_manifest(reference_manifest)
    if reference_manifest.vocab_size != gen_manifest.vocab_size:
        raise EvaluationError(
            f"Vocabulary sizes differ: generated {gen_manifest.vocab_size}, "
            f"reference {reference_manifest.vocab_size}."
        )
    extractor = _resolve_extractor(predictor, gen_manifest, window_config)

    for line_no, reason in gen_manifest.rejected:
        logger.warning(f"Excluding manifest line {line_no}: {reason}")
    excluded = len(gen_manifest.rejected)

    scatter = ScatterDump()
    generated_features = []
    with timed(f"Scoring {len(gen_manifest)} generated clips"):
        for record in gen_manifest:
            try:
                tokens = gen_manifest.load_tokens(record)
                predicted = denormalize_av(predictor.predict_tokens(tokens))
                features = extractor.extract(tokens).features.mean(axis=0)
            except LaraGenError as exc:
                logger.warning(f"Excluding clip {record.clip_id}: {exc}")
                excluded += 1
                continue
            generated_features.append(features)
            scatter.add(
                record.clip_id,
                record.emotion.valence,
                record.emotion.arousal,
                predicted.valence,
                predicted.arousal,
            )

    if excluded:
        logger.warning(f"{excluded} clip(s) excluded from evaluation of {gen_dir}")
    if not len(scatter):
        raise EvaluationError(f"No evaluable clips in {gen_dir}.")

    with timed("Reference feature extraction"):
        reference_features = clip_mean_features(reference_manifest, extractor)
    fd = frechet_distance(np.stack(generated_features), reference_features, eps=eps)

    r_v, r2_v, ccc_v = _axis_metrics(scatter, "v")
    r_a, r2_a, ccc_a = _axis_metrics(scatter, "a")
    report = MetricsReport(
        system_name=system_name or Path(gen_dir).name,
        fd=fd,
        r_a=r_a,
        r_v=r_v,
        r2_a=r2_a,
        r2_v=r2_v,
        ccc_a=ccc_a,
        ccc_v=ccc_v,
        n_clips=len(scatter),
        seed=int(gen_manifest.meta.get("seed", 0) if seed is None else seed),
    )
    logger.info(
        f"{report.system_name}: fd={fd:.4f} r_a={r_a:.3f} r_v={r_v:.3f} "
        f"ccc_a={ccc_a:.3f} ccc_v={ccc_v:.3f} over {report.n_clips} clips"
    )

    if report_path:
        write_report(report_path, report)
    if scatter_path:
        write_scatter(scatter_path, scatter)
    return report, scatter


def comparison_table(reports, title="Emotion-conditioned generation"):
    return {
        "title": title,
        "columns": COMPARISON_COLUMNS,
        "rows": [{column: report.to_json()[column] for column in COMPARISON_COLUMNS} for report in reports],
    }


def write_comparison(reports, csv_path=None, pdf_path=None, title="Emotion-conditioned generation"):
    if not reports:
        raise EvaluationError("Nothing to compare: no reports given.")
    table = comparison_table(reports, title)
    written = []
    if csv_path:
        written.append(_write_bytes(csv_path, CsvRenderer().render(table)))
    if pdf_path:
        written.append(_write_bytes(pdf_path, PdfRenderer().render(table)))
    return table, written
