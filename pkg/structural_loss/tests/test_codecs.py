import struct
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from structural_loss.codecs import (
    decode_segt,
    encode_segt,
    read_labels,
    read_pgm_array,
    read_segt,
    sniff_format,
    write_labels,
    write_segt,
)
from structural_loss.exceptions import GridFormatError
from structural_loss.grids import VOID, LabelMap


class CodecTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_segt_header_layout(self):
        planes = np.arange(24, dtype=np.float64).reshape(2, 3, 4)
        blob = encode_segt(planes)
        self.assertEqual(blob[:4], b"SEGT")
        self.assertEqual(struct.unpack("<III", blob[4:16]), (3, 4, 2))
        self.assertEqual(len(blob), 16 + 24 * 4)
        decoded, end = decode_segt(blob)
        self.assertEqual(end, len(blob))
        np.testing.assert_array_equal(decoded, planes)

    def test_segt_file_keeps_float32_values(self):
        path = self.root / "probs.segt"
        planes = np.random.default_rng(0).random((3, 5, 6))
        write_segt(path, planes)
        np.testing.assert_array_equal(read_segt(path), planes.astype(np.float32).astype(np.float64))
        self.assertEqual(sniff_format(path), "segt")

    def test_segt_rejects_bad_magic_truncation_and_trailing_bytes(self):
        blob = encode_segt(np.zeros((1, 2, 2)))
        with self.assertRaises(GridFormatError):
            decode_segt(b"SEGX" + blob[4:])
        with self.assertRaises(GridFormatError):
            decode_segt(blob[:-1])
        path = self.root / "extra.segt"
        path.write_bytes(blob + b"\x00")
        with self.assertRaises(GridFormatError):
            read_segt(path)

    def test_labels_round_trip_with_void(self):
        path = self.root / "labels.pgm"
        labels = LabelMap(np.array([[0, 1, 2], [VOID, 1, 0]]), 3)
        write_labels(path, labels)
        self.assertEqual(sniff_format(path), "pgm")
        loaded = read_labels(path)
        self.assertEqual(loaded.class_count, 3)
        np.testing.assert_array_equal(loaded.ids, labels.ids)

    def test_pgm_header_comments_are_skipped(self):
        path = self.root / "commented.pgm"
        path.write_bytes(b"P5\n# made by hand\n3 1\n# depth\n255\n" + bytes([0, 1, 255]))
        np.testing.assert_array_equal(read_pgm_array(path), [[0, 1, 255]])

    def test_pgm_rejects_wide_samples_and_short_rasters(self):
        wide = self.root / "wide.pgm"
        wide.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with self.assertRaises(GridFormatError):
            read_pgm_array(wide)
        short = self.root / "short.pgm"
        short.write_bytes(b"P5\n2 2\n255\n\x00\x00\x00")
        with self.assertRaises(GridFormatError):
            read_pgm_array(short)

    def test_unknown_magic(self):
        path = self.root / "image.png"
        path.write_bytes(b"\x89PNG....")
        with self.assertRaises(GridFormatError):
            sniff_format(path)
