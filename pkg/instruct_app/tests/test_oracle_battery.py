import math

import numpy as np
from django.test import SimpleTestCase, tag

from instruct_app.utils.oracle_battery import (FAIL, PASS, _result, misaligned_checks, nonnegativity_checks,
                                               run_oracle_battery)


class OracleResultTests(SimpleTestCase):

    def test_tolerance(self):
        self.assertEqual(_result('a', 1.0, 1.05, 0.1).status, PASS)
        failed = _result('b', 1.0, 1.5, 0.1)
        self.assertEqual(failed.status, FAIL)
        self.assertFalse(failed.passed)

    def test_infinite_expectation(self):
        self.assertTrue(_result('kl', math.inf, math.inf, 0.0).passed)
        self.assertFalse(_result('kl', math.inf, 3.0, 0.0).passed)


class OracleBatteryTests(SimpleTestCase):

    def test_misaligned_checks_pass(self):
        self.assertTrue(all(result.passed for result in misaligned_checks()))

    def test_nonnegativity_checks_pass(self):
        results = nonnegativity_checks(50, np.random.SeedSequence(1))
        self.assertEqual([r.check for r in results],
                         ['ikl_nonnegative', 'ikl_zero_on_identical', 'ikl_positive_on_distinct'])
        self.assertTrue(all(result.passed for result in results))

    def test_reduced_battery_passes(self):
        results = run_oracle_battery(batch=20000, random_pairs=20, seed=0)
        failed = [(r.check, r.expected, r.observed, r.tolerance) for r in results if not r.passed]
        self.assertEqual(failed, [])
        self.assertEqual(len(results), 15)

    def test_battery_is_deterministic(self):
        first = run_oracle_battery(batch=2000, random_pairs=5, seed=3)
        second = run_oracle_battery(batch=2000, random_pairs=5, seed=3)
        self.assertEqual(first, second)

    @tag('slow')
    def test_full_battery_passes(self):
        results = run_oracle_battery(seed=0)
        self.assertTrue(all(result.passed for result in results), [r for r in results if not r.passed])
