import hashlib


class UniqueId:
    """Deterministic identifiers for clips, derived from a run seed and an index."""

    @staticmethod
    def clip_id(prefix, seed, index):
        raw_string = f"{prefix}_{seed}_{index}"
        digest = hashlib.md5(raw_string.encode("utf-8")).hexdigest()[:8]
        return f"{prefix}-{index:05d}-{digest}"

    @staticmethod
    def derived_seed(seed, *parts):
        """Stable 31-bit seed for a sub-stream of a seeded run."""
        raw_string = "_".join(str(part) for part in (seed, *parts))
        return int(hashlib.md5(raw_string.encode("utf-8")).hexdigest(), 16) % (2**31)
