import hashlib
import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)


def _line(record):
    return json.dumps(record, sort_keys=True)


class TrainingLog:
    """
    JSON-lines training log; every record is flushed as soon as it is added.

    The digest is a hash chain over the record lines, so a resumed run that
    starts from the digest stored in its checkpoint ends on the same digest as
    an uninterrupted run.
    """

    def __init__(self, path=None, records=None, append=False, chain=""):
        self.path = Path(path) if path else None
        self.records = []
        self.chain = chain
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if not append:
                self.path.write_text("")
        for record in records or []:
            self._extend_chain(record)
            self.records.append(record)

    def _extend_chain(self, record):
        payload = (self.chain + _line(record)).encode("utf-8")
        self.chain = hashlib.sha256(payload).hexdigest()

    def add(self, **record):
        self.records.append(record)
        self._extend_chain(record)
        if self.path:
            with open(self.path, "a") as fh:
                fh.write(_line(record) + "\n")
        return record

    def values(self, key):
        return [record[key] for record in self.records if record.get(key) is not None]

    def digest(self):
        return self.chain

    @classmethod
    def read(cls, path):
        lines = Path(path).read_text().splitlines()
        return cls(records=[json.loads(line) for line in lines if line.strip()])
