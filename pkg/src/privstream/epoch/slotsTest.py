import unittest

import numpy as np

from privstream.dpf.dpf import TableGeometry, keygen, eval_full, combine, xor_accumulate
from privstream.epoch.slots import pick_slot, pick_dummy, plan_epoch_spread, collision_probability
from privstream.epoch.slots import expected_collisions, surplus_writes, deployment_plan, WriteRequest
from privstream.shared.errors import ValidationError, GeometryError

class TestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(4300)
        unittest.TestCase.setUp(self)

    def testPickSlotDegenerate(self):
        with self.assertRaises(GeometryError):
            pick_slot(1, self.rng)

    def testPickSlotUniform(self):
        rows, draws = 512, 10**5
        counts = np.bincount([pick_slot(rows, self.rng) for i in range(draws)], minlength=rows)
        self.assertEqual(len(counts), rows)
        expected = draws / rows
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        # upper 0.001 quantile of chi-square with 511 degrees of freedom
        self.assertLess(chi2, 615.6)

    def testPickSlotOsEntropy(self):
        for i in range(100):
            self.assertTrue(0 <= pick_slot(7) < 7)

    def testDummyIsNeutral(self):
        geom = TableGeometry(32, 4)
        dummy = pick_dummy(geom, self.rng)
        self.assertIsInstance(dummy, WriteRequest)
        self.assertEqual(dummy.message, bytes(4))
        base = combine(eval_full(k) for k in keygen(geom, 7, b'data', 3, self.rng))
        with_dummy = xor_accumulate(base, combine(eval_full(k) for k in keygen(geom, dummy.target_row, dummy.message, 3, self.rng)))
        self.assertTrue(np.array_equal(base, with_dummy))

    def testEpochSpread(self):
        picks = [plan_epoch_spread(5, self.rng) for i in range(500)]
        self.assertEqual(set(picks), set(range(5)))
        self.assertEqual(plan_epoch_spread(1, self.rng), 0)
        with self.assertRaises(ValidationError):
            plan_epoch_spread(0, self.rng)

    def testCollisionProbability(self):
        self.assertEqual(collision_probability(0, 10), 0)
        self.assertEqual(collision_probability(1, 10), 0)
        self.assertAlmostEqual(collision_probability(2, 2), 0.5)
        self.assertAlmostEqual(collision_probability(23, 365), 0.5073, places=4)
        self.assertEqual(collision_probability(11, 10), 1.0)
        with self.assertRaises(ValidationError):
            collision_probability(-1, 10)
        with self.assertRaises(ValidationError):
            collision_probability(2, 0)

    def testExpectedCollisions(self):
        self.assertEqual(expected_collisions(0, 10), 0)
        self.assertEqual(expected_collisions(1, 10), 0)
        self.assertAlmostEqual(expected_collisions(2, 2), 1.0)
        self.assertAlmostEqual(surplus_writes(2, 2), 0.5)
        self.assertAlmostEqual(surplus_writes(1, 100), 0.0)

        # empirical check of the expectation
        w, R, trials = 40, 256, 2000
        colliders = []
        for i in range(trials):
            slots = self.rng.integers(0, R, size=w)
            counts = np.bincount(slots, minlength=R)
            colliders.append(int(counts[counts > 1].sum()))
        self.assertAlmostEqual(np.mean(colliders), expected_collisions(w, R), delta=0.3)

    def testDeploymentPlan(self):
        plan = deployment_plan(220000, 512, 10)
        self.assertEqual(plan.clusters, 430)
        self.assertEqual(plan.servers, 4300)
        self.assertEqual(deployment_plan(0, 512, 2).clusters, 0)
        self.assertEqual(deployment_plan(1024, 512, 2, window_seconds=2).clusters, 1)
        with self.assertRaises(ValidationError):
            deployment_plan(10, 512, 1)

if __name__ == '__main__':
    unittest.main()
