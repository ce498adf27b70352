import unittest

import pytest

from privstream.harness.e2e import run_e2e, INPROCESS, LIVE
from privstream.epoch.write_table import tally_write_table
from privstream.shared.errors import InvalidParameterError

class TestCase(unittest.TestCase):
    def testInProcessEpoch(self):
        result = run_e2e(40, 1024, 3, (0.75, 0.5), seed=12)
        self.assertEqual(len(result.tables), 3)
        self.assertEqual(len(set(t.to_bytes() for t in result.tables)), 1)
        tally = tally_write_table(result.tables[0], 8)
        # colliding writes garble their row, every other write decodes
        self.assertEqual(tally.respondents, len(result.decoded))
        self.assertLessEqual(len(result.decoded) + 2 * tally.undecodable_rows, 40)
        self.assertGreater(len(result.decoded), 30)

    def testSeedIsReproducible(self):
        a = run_e2e(20, 128, 2, (0.9, 0.5), seed=3)
        b = run_e2e(20, 128, 2, (0.9, 0.5), seed=3)
        self.assertEqual(a.tables[0].to_bytes(), b.tables[0].to_bytes())

    def testAuditedEpochRejectsNothingHonest(self):
        result = run_e2e(10, 64, 3, (0.75, 0.5), seed=4, audit_mode='eager')
        self.assertEqual(result.rejected, 0)

    def testNoClients(self):
        result = run_e2e(0, 64, 2, (0.75, 0.5), seed=1)
        self.assertEqual(result.decoded, [])
        self.assertEqual(result.tables[0].nonzero_rows, [])
        with self.assertRaises(InvalidParameterError):
            run_e2e(1, 64, 2, (0.75, 0.5), seed=1, backend='cloud')

    @pytest.mark.network
    def testLiveMatchesInProcess(self):
        local = run_e2e(100, 512, 2, (0.75, 0.5), seed=21, backend=INPROCESS)
        live = run_e2e(100, 512, 2, (0.75, 0.5), seed=21, backend=LIVE)
        self.assertEqual(live.rejected, 0)
        self.assertEqual(live.decoded, local.decoded)
        for a, b in zip(live.tables, local.tables):
            self.assertEqual(a.to_bytes(), b.to_bytes())

if __name__ == '__main__':
    unittest.main()
