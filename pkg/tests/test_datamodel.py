"""
.. module:: test_datamodel
   :platform: Unix, Windows
   :synopsis: Tests for tensors, file formats and label conversions

.. moduleauthor:: purelabel contributors

"""

import os
import struct
import tempfile
import unittest

import numpy as np

from context import purelabel
from purelabel import datamodel
from purelabel.errors import FeatureFormatError, InvalidSpecError


class TestFeatureFiles(unittest.TestCase):

    def setUp(self):
        self._dir = tempfile.TemporaryDirectory()
        self.dir = self._dir.name

    def tearDown(self):
        self._dir.cleanup()

    def path(self, name):
        return os.path.join(self.dir, name)

    def test_binary_round_trip(self):
        """Binary write then load reproduces f32 values bitwise"""
        rng = np.random.default_rng(3)
        values = rng.standard_normal((7, 5)).astype(np.float32).astype(np.float64)
        datamodel.write_features(values, self.path("f.bin"))
        loaded = datamodel.load_features(self.path("f.bin"))
        self.assertEqual((loaded.rows, loaded.dim), (7, 5))
        self.assertTrue(np.array_equal(loaded.values, values))

    def test_binary_header_layout(self):
        """Header is magic, u32 version, u64 rows, u32 dim, little-endian"""
        datamodel.write_features(np.ones((2, 3)), self.path("f.bin"))
        with open(self.path("f.bin"), "rb") as fh:
            data = fh.read()
        self.assertEqual(data[:8], b"DMLPFEAT")
        self.assertEqual(struct.unpack_from("<IQI", data, 8), (1, 2, 3))
        self.assertEqual(len(data), 24 + 6 * 4)

    def test_binary_truncated_payload(self):
        """A payload shorter than N*d*4 bytes is rejected"""
        datamodel.write_features(np.ones((2, 3)), self.path("f.bin"))
        with open(self.path("f.bin"), "rb") as fh:
            data = fh.read()
        with open(self.path("short.bin"), "wb") as fh:
            fh.write(data[:-4])
        with self.assertRaises(FeatureFormatError) as ctx:
            datamodel.load_features(self.path("short.bin"))
        self.assertIsNotNone(ctx.exception.offset)

    def test_binary_bad_magic_and_nan(self):
        """Wrong magic and non-finite values name their byte offset"""
        with open(self.path("bad.bin"), "wb") as fh:
            fh.write(b"NOTFEATS" + struct.pack("<IQI", 1, 1, 1) + b"\0\0\0\0")
        with self.assertRaises(FeatureFormatError) as ctx:
            datamodel.load_features(self.path("bad.bin"))
        self.assertEqual(ctx.exception.offset, 0)

        with open(self.path("nan.bin"), "wb") as fh:
            fh.write(b"DMLPFEAT" + struct.pack("<IQI", 1, 1, 2)
                     + struct.pack("<ff", 1.0, float("nan")))
        with self.assertRaises(FeatureFormatError) as ctx:
            datamodel.load_features(self.path("nan.bin"))
        self.assertEqual(ctx.exception.offset, 28)

    def test_csv(self):
        """CSV rows parse directly; ragged rows name their line"""
        with open(self.path("f.csv"), "w") as fh:
            fh.write("1.0,2.0\n3.0,4.0\n")
        loaded = datamodel.load_features(self.path("f.csv"), datamodel.FeatureFormat.CSV)
        self.assertTrue(np.array_equal(loaded.values, [[1.0, 2.0], [3.0, 4.0]]))

        with open(self.path("ragged.csv"), "w") as fh:
            fh.write("1.0,2.0\n3.0\n")
        with self.assertRaises(FeatureFormatError) as ctx:
            datamodel.load_features(self.path("ragged.csv"), datamodel.FeatureFormat.CSV)
        self.assertEqual(ctx.exception.line, 2)

    def test_labels_files(self):
        """Index-per-line and one-hot CSV label files"""
        labels = datamodel.HardLabels(np.array([2, 0, 1]), 3)
        datamodel.write_labels(labels, self.path("y.txt"))
        loaded = datamodel.load_labels(self.path("y.txt"))
        self.assertEqual(loaded.classes, 3)
        self.assertTrue(np.array_equal(loaded.values, [2, 0, 1]))

        with open(self.path("y.csv"), "w") as fh:
            fh.write("0,1,0\n1,0,0\n")
        onehot = datamodel.load_any_labels(self.path("y.csv"))
        self.assertTrue(np.array_equal(onehot.values, [1, 0]))

        with open(self.path("bad.txt"), "w") as fh:
            fh.write("1\nx\n")
        with self.assertRaises(FeatureFormatError):
            datamodel.load_labels(self.path("bad.txt"))

    def test_labels_non_ascii_digit(self):
        """A superscript digit is rejected with its line, not parsed"""
        with open(self.path("sup.txt"), "w", encoding="utf-8") as fh:
            fh.write("0\n\u00b2\n")
        with self.assertRaises(FeatureFormatError) as ctx:
            datamodel.load_labels(self.path("sup.txt"))
        self.assertEqual(ctx.exception.line, 2)

    def test_labels_out_of_range_line(self):
        """Blank lines count when reporting an out-of-range index"""
        with open(self.path("gap.txt"), "w") as fh:
            fh.write("0\n\n\n7\n")
        with self.assertRaises(FeatureFormatError) as ctx:
            datamodel.load_labels(self.path("gap.txt"), classes=3)
        self.assertEqual(ctx.exception.line, 4)


class TestTypes(unittest.TestCase):

    def test_feature_matrix_invariants(self):
        """Feature matrices are finite, non-empty and read-only"""
        with self.assertRaises(InvalidSpecError):
            datamodel.FeatureMatrix(np.array([[1.0, np.inf]]))
        with self.assertRaises(ValueError):
            datamodel.FeatureMatrix(np.zeros((0, 3)))
        fm = datamodel.FeatureMatrix(np.ones((2, 2)))
        with self.assertRaises(ValueError):
            fm.values[0, 0] = 5.0

    def test_hard_labels_range(self):
        with self.assertRaises(InvalidSpecError):
            datamodel.HardLabels(np.array([0, 3]), 3)

    def test_validation_set_one_hot(self):
        """Validation label rows must be exactly one-hot"""
        feats = datamodel.FeatureMatrix(np.ones((2, 2)))
        with self.assertRaises(InvalidSpecError):
            datamodel.CleanValidationSet(feats, np.array([[0.5, 0.5], [1.0, 0.0]]))
        val = datamodel.CleanValidationSet.from_hard(
            feats, datamodel.HardLabels(np.array([1, 0]), 2))
        self.assertTrue(np.array_equal(val.labels, [[0, 1], [1, 0]]))


class TestConversions(unittest.TestCase):

    def test_init_logits(self):
        """Initial logits are one-hot rows"""
        logits = datamodel.init_logits(datamodel.HardLabels(np.array([2]), 3))
        self.assertTrue(np.array_equal(logits.values, [[0, 0, 1]]))
        logits = datamodel.init_logits(datamodel.HardLabels(np.array([0]), 2))
        self.assertTrue(np.array_equal(logits.values, [[1, 0]]))
        logits = datamodel.init_logits(datamodel.HardLabels(np.array([1, 1]), 2))
        self.assertTrue(np.array_equal(logits.values, [[0, 1], [0, 1]]))
        scaled = datamodel.init_logits(datamodel.HardLabels(np.array([1]), 2), scale=4.0)
        self.assertTrue(np.array_equal(scaled.values, [[0, 4]]))

    def test_effective_labels_values(self):
        uniform = datamodel.effective_labels(datamodel.LabelLogits([[0.0, 0.0, 0.0]]), 1.0)
        np.testing.assert_allclose(uniform, [[1 / 3] * 3], atol=1e-12)
        sharp = datamodel.effective_labels(datamodel.LabelLogits([[0.0, 0.0, 1.0]]), 100.0)
        np.testing.assert_allclose(sharp, [[0, 0, 1]], atol=1e-6)
        soft = datamodel.effective_labels(datamodel.LabelLogits([[0.0, 0.0, 1.0]]), 1.0)
        np.testing.assert_allclose(soft, [[0.2119416, 0.2119416, 0.5761169]], atol=1e-6)

    def test_effective_labels_normalized(self):
        """Rows sum to one even for large logits"""
        rng = np.random.default_rng(0)
        logits = datamodel.LabelLogits(rng.uniform(-50, 50, size=(200, 7)))
        for alpha in (0.01, 1.0, 30.0):
            soft = datamodel.effective_labels(logits, alpha)
            self.assertTrue(np.all(np.isfinite(soft)))
            np.testing.assert_allclose(soft.sum(axis=1), 1.0, atol=1e-6)
        with self.assertRaises(InvalidSpecError):
            datamodel.effective_labels(logits, 0.0)

    def test_hard_labels(self):
        """Argmax with ties to the lowest index"""
        hard = datamodel.hard_labels(datamodel.LabelLogits([[0.1, 0.7, 0.2], [0.5, 0.5, 0.0]]))
        self.assertTrue(np.array_equal(hard.values, [1, 0]))

    def test_argmax_invariance(self):
        """hard_labels ignores alpha and per-row shifts"""
        rng = np.random.default_rng(1)
        values = rng.uniform(-5, 5, size=(100, 4))
        base = datamodel.hard_labels(datamodel.LabelLogits(values)).values
        shifted = values + rng.uniform(-3, 3, size=(100, 1))
        self.assertTrue(np.array_equal(
            datamodel.hard_labels(datamodel.LabelLogits(shifted)).values, base))
        for alpha in (0.5, 2.0, 10.0):
            soft = datamodel.effective_labels(datamodel.LabelLogits(values), alpha)
            self.assertTrue(np.array_equal(np.argmax(soft, axis=1), base))

    def test_normalize_and_bias(self):
        fm = datamodel.FeatureMatrix(np.array([[3.0, 4.0], [0.0, 0.0]]))
        normed = datamodel.normalize_features(fm).values
        np.testing.assert_allclose(normed, [[0.6, 0.8], [0.0, 0.0]])
        with_bias = datamodel.add_bias_column(fm.values)
        self.assertTrue(np.array_equal(with_bias[:, -1], [1.0, 1.0]))


if __name__ == "__main__":
    unittest.main()
