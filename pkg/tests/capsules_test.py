"""Tests for engine.capsules."""

import math
import os
import shutil
import tempfile

import numpy as np
from absl.testing import absltest
from absl.testing import parameterized

from engine import capsules
from engine.capsules import (
    CouplingMatrix,
    DimensionMismatchError,
    DomainError,
    EmptyInputError,
    LogitMatrix,
    NonFiniteError,
    OffSimplexError,
    OutputSet,
    PredictionSet,
    RoutingConfig,
    uniform_coupling,
    validate_prediction_set,
)
from engine.scalar_math import squash


class PredictionSetTest(absltest.TestCase):

    def test_minimal_instance_is_accepted(self):
        preds = validate_prediction_set({
            "num_input": 2, "num_output": 1, "dims": [2],
            "predictions": [[[1.0, 0.0], [0.5, -0.5]]],
        })
        self.assertEqual(preds.shape, (2, 1))
        self.assertEqual(preds.dims, [2])
        np.testing.assert_array_equal(preds.vote(0, 1), [0.0, -0.5])

    def test_missing_matrix_is_a_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            validate_prediction_set({
                "num_input": 2, "num_output": 2, "dims": [2, 2],
                "predictions": [[[1.0, 0.0], [0.0, 1.0]]],
            })

    def test_nan_names_the_capsule(self):
        with self.assertRaises(NonFiniteError) as ctx:
            validate_prediction_set([np.eye(2), np.array([[1.0, math.nan], [0.0, 0.0]])])
        self.assertEqual(ctx.exception.capsule, 1)
        self.assertIn("capsule 1", str(ctx.exception))

    def test_zero_sizes_are_rejected(self):
        with self.assertRaises(EmptyInputError):
            validate_prediction_set({"num_input": 0, "num_output": 1, "dims": [2], "predictions": [[]]})
        with self.assertRaises(EmptyInputError):
            validate_prediction_set([])

    def test_header_counts_must_be_integral(self):
        def instance(**header):
            raw = {"num_input": 2, "num_output": 1, "dims": [2], "predictions": [[[1.0, 0.0], [0.0, 1.0]]]}
            raw.update(header)
            return raw

        self.assertEqual(validate_prediction_set(instance(num_input=2.0)).num_input, 2)
        for header in ({"num_input": 2.7}, {"num_output": 1.5}, {"dims": [2.5]},
                       {"num_input": True}, {"num_input": "two"}, {"num_input": math.inf}):
            with self.subTest(header=header):
                with self.assertRaises(DimensionMismatchError):
                    validate_prediction_set(instance(**header))

    def test_wrong_row_count_names_the_capsule(self):
        with self.assertRaises(DimensionMismatchError) as ctx:
            validate_prediction_set({
                "num_input": 2, "num_output": 2, "dims": [2, 3],
                "predictions": [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]],
            })
        self.assertEqual(ctx.exception.capsule, 1)

    def test_column_count_must_agree(self):
        with self.assertRaises(DimensionMismatchError):
            PredictionSet((np.zeros((2, 3)), np.zeros((2, 4))))

    def test_ragged_dimensions_are_supported(self):
        preds = PredictionSet((np.ones((2, 3)), np.ones((5, 3))))
        self.assertEqual(preds.dims, [2, 5])
        self.assertEqual(preds.num_input, 3)

    def test_uniform_constructor(self):
        preds = PredictionSet.uniform(np.zeros((4, 2, 3)))
        self.assertEqual(preds.shape, (3, 4))
        self.assertEqual(preds.dims, [2, 2, 2, 2])

    def test_arrays_are_read_only_copies(self):
        raw = np.ones((2, 2))
        preds = PredictionSet((raw,))
        raw[0, 0] = 5.0
        self.assertEqual(preds.predictions[0][0, 0], 1.0)
        with self.assertRaises(ValueError):
            preds.predictions[0][0, 0] = 2.0


class CouplingMatrixTest(parameterized.TestCase):

    @parameterized.parameters((1, 4), (3, 1), (2, 2), (5, 3))
    def test_uniform_coupling(self, m, n):
        C = uniform_coupling(m, n)
        self.assertEqual(C.shape, (m, n))
        np.testing.assert_allclose(C.values, 1.0 / n, rtol=0, atol=1e-15)

    def test_uniform_coupling_exact_entries(self):
        np.testing.assert_array_equal(uniform_coupling(1, 4).values, [[0.25, 0.25, 0.25, 0.25]])
        np.testing.assert_array_equal(uniform_coupling(3, 1).values, np.ones((3, 1)))

    def test_negative_entry_is_rejected(self):
        with self.assertRaises(OffSimplexError):
            CouplingMatrix([[1.5, -0.5]])

    def test_large_row_drift_is_rejected(self):
        with self.assertRaises(OffSimplexError):
            CouplingMatrix([[0.5, 0.5 + 1e-9]])

    def test_small_row_drift_is_renormalized(self):
        C = CouplingMatrix([[0.5, 0.5 + 5e-13], [0.25, 0.75]])
        self.assertAlmostEqual(C.values[0].sum(), 1.0, delta=1e-15)
        np.testing.assert_array_equal(C.row(1), [0.25, 0.75])

    def test_logits_must_be_finite(self):
        with self.assertRaises(NonFiniteError):
            LogitMatrix([[0.0, math.inf]])
        np.testing.assert_array_equal(LogitMatrix.zeros(2, 3).values, np.zeros((2, 3)))


class RoutingConfigTest(absltest.TestCase):

    def test_defaults(self):
        config = RoutingConfig()
        self.assertEqual(config.iterations, 3)
        self.assertIsNone(config.stop_tolerance)
        self.assertTrue(config.record_full_state)

    def test_invalid_values(self):
        with self.assertRaises(DomainError):
            RoutingConfig(iterations=-1)
        with self.assertRaises(DomainError):
            RoutingConfig(stop_tolerance=-1e-3)


class OutputSetTest(absltest.TestCase):

    def test_squashed_outputs_are_accepted(self):
        s = np.array([3.0, 4.0])
        outputs = OutputSet((s, np.zeros(2)), (squash(s), np.zeros(2)))
        np.testing.assert_allclose(outputs.output_norms(), [25.0 / 26.0, 0.0], rtol=0, atol=1e-15)

    def test_saturated_output_of_a_huge_net_input(self):
        OutputSet((np.array([1e20, 0.0]),), (np.array([1.0, 0.0]),))

    def test_outputs_that_are_not_squashed_are_rejected(self):
        s = np.array([1.0, 0.0])
        for v in ([1.0, 0.0], [0.4, 0.0], [0.0, 0.5], [-0.5, 0.0]):
            with self.subTest(v=v):
                with self.assertRaises(DomainError) as ctx:
                    OutputSet((np.zeros(2), s), (np.zeros(2), np.array(v)))
                self.assertEqual(ctx.exception.capsule, 1)

    def test_zero_net_input_needs_a_zero_output(self):
        with self.assertRaises(DomainError):
            OutputSet((np.zeros(2),), (np.array([1e-13, 0.0]),))


class InstanceJsonTest(absltest.TestCase):

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmp)

    def test_save_and_load_keep_every_bit(self):
        rng = np.random.default_rng(3)
        preds = PredictionSet((rng.normal(size=(2, 3)), rng.normal(size=(4, 3))))
        path = os.path.join(self.tmp, "inst.json")
        digest = capsules.save_instance(preds, path)
        loaded = capsules.load_instance(path)
        self.assertEqual(loaded.dims, [2, 4])
        for a, b in zip(preds.predictions, loaded.predictions):
            np.testing.assert_array_equal(a, b)
        with open(path, encoding="utf-8") as fh:
            self.assertEqual(capsules.instance_digest(fh.read()), digest)


if __name__ == "__main__":
    absltest.main()
