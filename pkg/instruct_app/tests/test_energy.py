import numpy as np
from django.test import SimpleTestCase

from instruct_app.exceptions import ShapeMismatchError
from instruct_app.utils.datasets import RING, ToyDataset
from instruct_app.utils.energy import baseline_energy_distance, energy_distance, gaussian_energy_distance
from instruct_app.utils.rng import make_rng


class EnergyDistanceTests(SimpleTestCase):

    def test_identical_sets_paired(self):
        a = make_rng(0).standard_normal((300, 2))
        self.assertAlmostEqual(energy_distance(a, a.copy(), paired=True), 0.0, places=12)

    def test_symmetric(self):
        rng = make_rng(1)
        a, b = rng.standard_normal((200, 2)), rng.standard_normal((150, 2)) + 0.5
        self.assertAlmostEqual(energy_distance(a, b), energy_distance(b, a), places=12)

    def test_chunking_does_not_change_the_value(self):
        rng = make_rng(2)
        a, b = rng.standard_normal((103, 3)), rng.standard_normal((57, 3))
        self.assertAlmostEqual(energy_distance(a, b, chunk=7), energy_distance(a, b, chunk=4096), places=10)

    def test_matches_gaussian_closed_form(self):
        rng = make_rng(3)
        a = rng.standard_normal(4000)
        b = 1.0 + rng.standard_normal(4000)
        self.assertAlmostEqual(energy_distance(a, b), gaussian_energy_distance(0.0, 1.0, 1.0, 1.0), delta=0.08)

    def test_closed_form_special_cases(self):
        self.assertAlmostEqual(gaussian_energy_distance(0.0, 1.0, 0.0, 1.0), 0.0, places=12)
        # point masses: 2 |m1 - m2|
        self.assertAlmostEqual(gaussian_energy_distance(0.0, 0.0, 3.0, 0.0), 6.0)
        with self.assertRaises(ValueError):
            gaussian_energy_distance(0.0, -1.0, 0.0, 1.0)

    def test_separated_sets_score_higher(self):
        rng = make_rng(4)
        a = rng.standard_normal((500, 2))
        near = rng.standard_normal((500, 2))
        far = rng.standard_normal((500, 2)) + 3.0
        self.assertLess(energy_distance(a, near), energy_distance(a, far))

    def test_shape_checks(self):
        with self.assertRaises(ShapeMismatchError):
            energy_distance(np.zeros((5, 2)), np.zeros((5, 3)))
        with self.assertRaises(ShapeMismatchError):
            energy_distance(np.zeros((5, 2)), np.zeros((4, 2)), paired=True)
        with self.assertRaises(ValueError):
            energy_distance(np.zeros((0, 2)), np.zeros((4, 2)))

    def test_baseline_is_small(self):
        value = baseline_energy_distance(ToyDataset(kind=RING), make_rng(5), 1000)
        self.assertGreaterEqual(value, 0.0)
        self.assertLess(value, 0.05)
