_CORRELATION = {"type": "number", "minimum": -1.0, "maximum": 1.0}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "MetricsReport",
    "type": "object",
    "properties": {
        "system_name": {"type": "string", "minLength": 1},
        "fd": {"type": "number", "minimum": 0.0},
        "r_a": _CORRELATION,
        "r_v": _CORRELATION,
        "r2_a": {"type": "number", "maximum": 1.0},
        "r2_v": {"type": "number", "maximum": 1.0},
        "ccc_a": _CORRELATION,
        "ccc_v": _CORRELATION,
        "n_clips": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
    },
    "required": [
        "system_name",
        "fd",
        "r_a",
        "r_v",
        "r2_a",
        "r2_v",
        "ccc_a",
        "ccc_v",
        "n_clips",
        "seed",
    ],
    "additionalProperties": False,
}

SCATTER_COLUMNS = ["clip_id", "v_true", "a_true", "v_pred", "a_pred"]

COMPARISON_COLUMNS = ["system_name", "fd", "r_a", "r_v", "r2_a", "r2_v", "ccc_a", "ccc_v", "n_clips"]
