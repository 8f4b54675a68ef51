import json
import struct

import numpy as np
import pandas as pd
import torch
from django.test import SimpleTestCase
from rest_framework import serializers

from commons.checkpoint import FORMAT_VERSION, load_module_tensors, module_tensors, read_container, write_container
from commons.exceptions import CheckpointError
from commons.logs import TrainingLog
from commons.renderer import CsvRenderer, PdfRenderer, ReportJsonRenderer
from commons.serializers import StrictSerializer, load_section
from commons.testing import WorkspaceMixin
from helpers.unique_id import UniqueId


class CheckpointTests(WorkspaceMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b/c": np.array([0.5], dtype=np.float32)}
        self.path = write_container(self.workdir / "x.ckpt", {"kind": "test", "step": 3}, self.tensors)

    def test_round_trip(self):
        header, tensors = read_container(self.path, kind="test")
        self.assertEqual(header["step"], 3)
        self.assertEqual(header["format_version"], FORMAT_VERSION)
        self.assertEqual([entry["name"] for entry in header["tensors"]], ["a", "b/c"])
        for name, array in self.tensors.items():
            np.testing.assert_array_equal(tensors[name], array)
        self.assertFalse(self.path.with_name("x.ckpt.tmp").exists())

    def test_layout(self):
        raw = self.path.read_bytes()
        self.assertEqual(raw[:4], b"LARA")
        (length,) = struct.unpack("<I", raw[4:8])
        self.assertEqual(json.loads(raw[8 : 8 + length])["kind"], "test")
        self.assertEqual(len(raw), 8 + length + 7 * 4)

    def test_wrong_kind(self):
        with self.assertRaisesRegex(CheckpointError, "expected 'generator'"):
            read_container(self.path, kind="generator")

    def test_bad_magic(self):
        self.path.write_bytes(b"ZZZZ" + self.path.read_bytes()[4:])
        with self.assertRaisesRegex(CheckpointError, "bad magic"):
            read_container(self.path)

    def test_unsupported_version(self):
        path = self.workdir / "v.ckpt"
        header = json.dumps({"format_version": FORMAT_VERSION + 1, "tensors": []}).encode()
        path.write_bytes(b"LARA" + struct.pack("<I", len(header)) + header)
        with self.assertRaisesRegex(CheckpointError, "format version"):
            read_container(path)

    def test_truncated_and_padded(self):
        raw = self.path.read_bytes()
        self.path.write_bytes(raw[:-2])
        with self.assertRaisesRegex(CheckpointError, "'b/c'"):
            read_container(self.path)
        self.path.write_bytes(raw + b"\0\0\0\0")
        with self.assertRaisesRegex(CheckpointError, "4 trailing bytes"):
            read_container(self.path)

    def test_short_and_headerless_files(self):
        path = self.workdir / "short.ckpt"
        path.write_bytes(b"LARA")
        with self.assertRaisesRegex(CheckpointError, "bad magic"):
            read_container(path)
        path.write_bytes(b"LARA" + struct.pack("<I", 100) + b"{}")
        with self.assertRaisesRegex(CheckpointError, "truncated inside its 100-byte header"):
            read_container(path)
        header = json.dumps({"format_version": FORMAT_VERSION}).encode()
        path.write_bytes(b"LARA" + struct.pack("<I", len(header)) + header)
        with self.assertRaisesRegex(CheckpointError, "no tensor table"):
            read_container(path)
        header = json.dumps({"format_version": FORMAT_VERSION, "tensors": [{"name": "a"}]}).encode()
        path.write_bytes(b"LARA" + struct.pack("<I", len(header)) + header)
        with self.assertRaisesRegex(CheckpointError, "malformed tensor table entry"):
            read_container(path)

    def test_missing_file(self):
        with self.assertRaisesRegex(CheckpointError, "Cannot read checkpoint"):
            read_container(self.workdir / "missing.ckpt")

    def test_module_tensors(self):
        torch.manual_seed(0)
        module = torch.nn.Linear(3, 2)
        copy = torch.nn.Linear(3, 2)
        load_module_tensors(copy, module_tensors(module))
        self.assertTrue(torch.equal(copy.weight, module.weight))

        with self.assertRaisesRegex(CheckpointError, "'bias' is missing"):
            load_module_tensors(copy, {"weight": np.zeros((2, 3))})
        with self.assertRaisesRegex(CheckpointError, r"'weight' .* shape \(3, 2\)"):
            load_module_tensors(copy, {"weight": np.zeros((3, 2)), "bias": np.zeros(2)})


class TrainingLogTests(WorkspaceMixin, SimpleTestCase):
    def test_records_are_flushed(self):
        path = self.workdir / "log.jsonl"
        log = TrainingLog(path)
        log.add(step=1, ce=2.5, lara=None)
        log.add(step=2, ce=2.0, lara=0.5)
        self.assertEqual(len(path.read_text().splitlines()), 2)
        self.assertEqual(log.values("lara"), [0.5])
        again = TrainingLog.read(path)
        self.assertEqual(again.records, log.records)
        self.assertEqual(again.digest(), log.digest())

    def test_chain_continues_across_a_restart(self):
        records = [{"step": i, "ce": 1.0 / i} for i in range(1, 7)]
        whole = TrainingLog(records=records)
        first = TrainingLog(records=records[:3])
        second = TrainingLog(chain=first.digest())
        for record in records[3:]:
            second.add(**record)
        self.assertEqual(second.digest(), whole.digest())
        self.assertNotEqual(first.digest(), whole.digest())

    def test_append(self):
        path = self.workdir / "log.jsonl"
        TrainingLog(path).add(step=1)
        TrainingLog(path, append=True).add(step=2)
        self.assertEqual(TrainingLog.read(path).values("step"), [1, 2])


class RendererTests(WorkspaceMixin, SimpleTestCase):
    payload = {
        "title": "Runs",
        "columns": ["system_name", "fd"],
        "rows": [{"system_name": "a", "fd": 0.1}, {"system_name": "b", "fd": 1.0 / 3.0}],
    }

    def test_csv_keeps_full_precision(self):
        path = self.workdir / "t.csv"
        path.write_bytes(CsvRenderer().render(self.payload))
        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ["system_name", "fd"])
        self.assertEqual(frame["fd"][1], 1.0 / 3.0)

    def test_csv_needs_columns(self):
        self.assertEqual(CsvRenderer().render([1, 2]), b"")

    def test_json_is_indented(self):
        rendered = ReportJsonRenderer().render({"b": 1, "a": [1, 2]})
        self.assertTrue(rendered.endswith(b"\n"))
        self.assertIn(b'\n  "b"', rendered)
        self.assertEqual(json.loads(rendered), {"b": 1, "a": [1, 2]})

    def test_pdf(self):
        self.assertTrue(PdfRenderer().render(self.payload).startswith(b"%PDF"))
        self.assertEqual(PdfRenderer().render({"rows": []}), b"")


class SampleSerializer(StrictSerializer):
    size = serializers.IntegerField(min_value=1, required=False)


class StrictSerializerTests(SimpleTestCase):
    def test_unknown_keys(self):
        serializer = SampleSerializer(data={"size": 2, "colour": "red"})
        self.assertFalse(serializer.is_valid())
        self.assertIn("colour", serializer.errors)

    def test_data_that_is_not_a_mapping(self):
        for data in (5, [1, 2], "size"):
            serializer = SampleSerializer(data=data)
            self.assertFalse(serializer.is_valid())
            self.assertIn("non_field_errors", serializer.errors)

    def test_load_section(self):
        self.assertEqual(load_section(SampleSerializer, {"size": "4"}, dict), {"size": 4})
        with self.assertRaises(serializers.ValidationError):
            load_section(SampleSerializer, {"size": "0"}, dict)


class UniqueIdTests(SimpleTestCase):
    def test_clip_ids(self):
        first = UniqueId.clip_id("gen", 0, 7)
        self.assertTrue(first.startswith("gen-00007-"))
        self.assertEqual(first, UniqueId.clip_id("gen", 0, 7))
        self.assertNotEqual(first, UniqueId.clip_id("gen", 1, 7))

    def test_derived_seeds(self):
        seed = UniqueId.derived_seed(3, "batches")
        self.assertEqual(seed, UniqueId.derived_seed(3, "batches"))
        self.assertNotEqual(seed, UniqueId.derived_seed(3, "split"))
        self.assertTrue(0 <= seed < 2**31)
