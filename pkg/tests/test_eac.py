"""
.. module:: test_eac
   :platform: Unix, Windows
   :synopsis: Tests for the accompanying classifier and its label update

.. moduleauthor:: purelabel contributors

"""

import unittest

import numpy as np
from scipy.special import softmax

from context import purelabel
from gradcheck import central_difference
from purelabel import eac
from purelabel.errors import DimensionError, InvalidSpecError, NumericError


class TestForward(unittest.TestCase):

    def test_examples(self):
        clf = eac.LinearClassifier(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([0.5, -0.5]))
        out = eac.classifier_forward(clf, np.array([[1.0, 1.0], [0.0, 0.0]]))
        np.testing.assert_allclose(out, [[1.5, 1.5], [0.5, -0.5]])

        no_bias = eac.LinearClassifier(clf.weights, clf.bias, use_bias=False)
        out = eac.classifier_forward(no_bias, np.array([[1.0, 1.0]]))
        np.testing.assert_allclose(out, [[1.0, 2.0]])

    def test_zero_classifier(self):
        clf = eac.LinearClassifier.zeros(3, 4)
        out = eac.classifier_forward(clf, np.ones((5, 3)))
        self.assertTrue(np.array_equal(out, np.zeros((5, 4))))
        with self.assertRaises(DimensionError):
            eac.classifier_forward(clf, np.ones((5, 2)))

    def test_seeded_classifier(self):
        a = eac.LinearClassifier.random(6, 3, 0.5, seed=4)
        b = eac.LinearClassifier.random(6, 3, 0.5, seed=4)
        self.assertTrue(np.array_equal(a.weights, b.weights))
        self.assertTrue(np.array_equal(a.bias, np.zeros(3)))
        other = eac.LinearClassifier.random(6, 3, 0.5, seed=5)
        self.assertFalse(np.array_equal(a.weights, other.weights))


class TestLoss(unittest.TestCase):

    def test_uniform_logits(self):
        """Uniform prediction costs ln(c), plus ln(c) of entropy"""
        logits = np.zeros((2, 4))
        targets = np.eye(4)[:2]
        self.assertAlmostEqual(eac.eac_loss(logits, targets, 0.0), np.log(4), places=12)
        self.assertAlmostEqual(eac.eac_loss(logits, targets, 1.0), 2 * np.log(4), places=12)

    def test_saturated(self):
        logits = np.array([[60.0, 0.0, 0.0]])
        targets = np.array([[1.0, 0.0, 0.0]])
        self.assertLess(eac.eac_loss(logits, targets, 1.0), 1e-3)

    def test_targets_must_be_distributions(self):
        with self.assertRaises(InvalidSpecError):
            eac.eac_loss(np.zeros((1, 2)), np.array([[0.6, 0.6]]), 0.0)
        with self.assertRaises(InvalidSpecError):
            eac.eac_loss(np.zeros((1, 2)), np.array([[1.5, -0.5]]), 0.0)
        with self.assertRaises(DimensionError):
            eac.eac_loss(np.zeros((1, 2)), np.array([[1.0, 0.0, 0.0]]), 0.0)

    def test_gradient_finite_differences(self):
        """Weight and bias gradients match central differences"""
        rng = np.random.default_rng(0)
        features = rng.standard_normal((4, 3))
        targets = softmax(rng.standard_normal((4, 2)), axis=1)
        for gamma in (0.0, 0.7):
            clf = eac.LinearClassifier(rng.standard_normal((3, 2)), rng.standard_normal(2))
            _, grad_w, grad_b = eac.eac_gradient(clf, features, targets, gamma,
                                                 weight_decay=0.1)

            def loss_w(w):
                return eac.eac_gradient(eac.LinearClassifier(w, clf.bias),
                                        features, targets, gamma, weight_decay=0.1)[0]

            def loss_b(b):
                return eac.eac_gradient(eac.LinearClassifier(clf.weights, b),
                                        features, targets, gamma, weight_decay=0.1)[0]

            np.testing.assert_allclose(grad_w, central_difference(loss_w, clf.weights),
                                       rtol=1e-4, atol=1e-9)
            np.testing.assert_allclose(grad_b, central_difference(loss_b, clf.bias),
                                       rtol=1e-4, atol=1e-9)

    def test_no_bias_gradient(self):
        clf = eac.LinearClassifier.zeros(2, 2, use_bias=False)
        _, _, grad_b = eac.eac_gradient(clf, np.ones((3, 2)), np.eye(2)[[0, 1, 0]], 0.0)
        self.assertTrue(np.array_equal(grad_b, np.zeros(2)))


class TestTraining(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(1)
        self.features = rng.standard_normal((32, 4))
        self.targets = softmax(3 * self.features[:, :3], axis=1)

    def test_zero_step_size(self):
        """A zero step size leaves the classifier untouched"""
        clf = eac.LinearClassifier(np.ones((4, 3)), np.ones(3))
        cfg = eac.EacConfig(optimizer=eac.AdamSettings(step_size=0.0))
        state = eac.AdamState.zeros_like(clf)
        new, state = eac.eac_train_step(clf, self.features, self.targets, state, cfg)
        self.assertTrue(np.array_equal(new.weights, clf.weights))
        self.assertTrue(np.array_equal(new.bias, clf.bias))
        self.assertEqual(state.t, 1)

    def test_descends(self):
        """Two hundred steps on a fixed batch lower the loss"""
        clf = eac.LinearClassifier.zeros(4, 3)
        cfg = eac.EacConfig(gamma_ent=0.0, optimizer={"step_size": 0.05})
        state = eac.AdamState.zeros_like(clf)
        before = eac.eac_gradient(clf, self.features, self.targets, 0.0)[0]
        for _ in range(200):
            clf, state = eac.eac_train_step(clf, self.features, self.targets, state, cfg)
        after = eac.eac_gradient(clf, self.features, self.targets, 0.0)[0]
        self.assertLess(after, before - 0.1)

    def test_deterministic(self):
        cfg = eac.EacConfig(optimizer={"step_size": 0.01})
        runs = []
        for _ in range(2):
            clf = eac.LinearClassifier.zeros(4, 3)
            state = eac.AdamState.zeros_like(clf)
            for _ in range(20):
                clf, state = eac.eac_train_step(clf, self.features, self.targets, state, cfg)
            runs.append(clf.weights)
        self.assertTrue(np.array_equal(runs[0], runs[1]))

    def test_non_finite_gradient(self):
        clf = eac.LinearClassifier.zeros(2, 2)
        state = eac.AdamState.zeros_like(clf)
        with self.assertRaises(NumericError):
            eac.adam_update(clf, state, np.array([[np.inf, 0], [0, 0]]), np.zeros(2),
                            eac.AdamSettings())

    def test_config_validation(self):
        with self.assertRaises(InvalidSpecError):
            eac.EacConfig(eta_e=1.5)
        with self.assertRaises(InvalidSpecError):
            eac.EacConfig(period=0)
        with self.assertRaises(InvalidSpecError):
            eac.AdamSettings(beta1=1.0)
        with self.assertRaises(InvalidSpecError):
            eac.EacConfig(init_std=-0.1)
        cfg = eac.EacConfig(blend_space="probability")
        self.assertIs(cfg.blend_space, eac.BlendSpace.PROBABILITY)
        self.assertEqual(eac.EacConfig.from_dict(cfg.to_dict()).blend_space,
                         eac.BlendSpace.PROBABILITY)


class TestLabelUpdate(unittest.TestCase):

    def test_endpoints(self):
        logits = np.array([[1.0, 2.0]])
        pred = np.array([[5.0, -1.0]])
        self.assertTrue(np.array_equal(eac.eac_label_update(logits, pred, 0.0), logits))
        self.assertTrue(np.array_equal(eac.eac_label_update(logits, pred, 1.0), pred))

    def test_half_blend(self):
        out = eac.eac_label_update(np.array([[0.0, 2.0]]), np.array([[2.0, 0.0]]), 0.5)
        np.testing.assert_allclose(out, [[1.0, 1.0]])

    def test_probability_space(self):
        """Probability blends map back to logits whose softmax is the blend"""
        logits = np.array([[0.0, 1.0, -1.0]])
        pred = np.array([[2.0, 0.0, 0.0]])
        alpha = 2.0
        out = eac.eac_label_update(logits, pred, 0.3, eac.BlendSpace.PROBABILITY, alpha)
        expected = 0.7 * softmax(alpha * logits, axis=1) + 0.3 * softmax(pred, axis=1)
        np.testing.assert_allclose(softmax(alpha * out, axis=1), expected, atol=1e-12)

    def test_invalid(self):
        with self.assertRaises(InvalidSpecError):
            eac.eac_label_update(np.zeros((1, 2)), np.zeros((1, 2)), -0.1)
        with self.assertRaises(DimensionError):
            eac.eac_label_update(np.zeros((1, 2)), np.zeros((2, 2)), 0.5)


if __name__ == "__main__":
    unittest.main()
