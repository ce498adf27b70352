import unittest

import numpy as np
from cryptography.hazmat.primitives import hashes

from privstream.dpf.dpf import TableGeometry, DpfKey, keygen, eval_full, xor_accumulate, combine
from privstream.dpf.dpf import point_table, nonzero_rows, serialize_key, deserialize_key
from privstream.dpf.dpf import EXPANDED, SEEDED, KEY_HEADER
from privstream.dpf.prg import AesCtrPrg
from privstream.shared.errors import GeometryError, ValidationError, DecodeError

class ShakePrg(object):
    """ a second PRG, to show keygen takes any seed_bytes/expand object """
    seed_bytes = 32

    def random_seed(self, rng=None):
        return rng.bytes(self.seed_bytes)

    def expand(self, seed, length):
        h = hashes.Hash(hashes.SHAKE256(length))
        h.update(seed)
        return h.finalize()

def combined(keyset):
    return combine(eval_full(k) for k in keyset)

class TestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1157)
        unittest.TestCase.setUp(self)

    def testTwoPartyPointFunction(self):
        geom = TableGeometry(4, 1)
        keyset = keygen(geom, 2, b'\xab', 2, self.rng)
        self.assertEqual(len(keyset), 2)
        self.assertEqual(combined(keyset).tobytes(), b'\x00\x00\xab\x00')

    def testDummyWriteCombinesToZero(self):
        geom = TableGeometry(4, 3)
        keyset = keygen(geom, 1, bytes(3), 3, self.rng)
        self.assertFalse(combined(keyset).any())

    def testOneNonzeroRowAtScale(self):
        geom = TableGeometry(1024, 4)
        target = int(self.rng.integers(0, 1024))
        message = b'\x01\x02\x03\x04'
        keyset = keygen(geom, target, message, 8, self.rng)
        self.assertEqual(nonzero_rows(combined(keyset)), [(target, message)])

    def testThreePartyExhaustive(self):
        geom = TableGeometry(8, 1)
        table = combined(keygen(geom, 5, b'\xff', 3, self.rng))
        for row in range(8):
            self.assertEqual(table[row, 0], 0xff if row == 5 else 0)

    def testExhaustiveCorrectness(self):
        for rows in [2, 3, 4, 8, 64, 1024]:
            geom = TableGeometry(rows, 2)
            for parties in [2, 3, 8]:
                for i in range(100):
                    target = int(self.rng.integers(0, rows))
                    message = self.rng.bytes(2)
                    expected = point_table(geom, target, message)
                    self.assertTrue(np.array_equal(combined(keygen(geom, target, message, parties, self.rng)), expected),
                                    (rows, parties, target, message))

    def testSeededEvaluationDeterministic(self):
        keyset = keygen(TableGeometry(16, 5), 3, b'hello', 3, self.rng)
        seeded = keyset[0]
        self.assertEqual(seeded.variant, SEEDED)
        self.assertTrue(np.array_equal(eval_full(seeded), eval_full(seeded)))
        last = keyset[2]
        self.assertEqual(last.variant, EXPANDED)
        self.assertEqual(eval_full(last).tobytes(), last.material)

    def testLeadingSharesIndependentOfWrite(self):
        geom = TableGeometry(32, 2)
        a = keygen(geom, 0, b'\x00\x01', 4, np.random.default_rng(99))
        b = keygen(geom, 31, b'\xff\xfe', 4, np.random.default_rng(99))
        for i in range(3):
            self.assertEqual(a[i], b[i])
        self.assertNotEqual(a[3], b[3])

    def testCollisionXorsMessages(self):
        geom = TableGeometry(8, 1)
        first = combined(keygen(geom, 6, b'\x0f', 2, self.rng))
        second = combined(keygen(geom, 6, b'\x3c', 2, self.rng))
        self.assertEqual(nonzero_rows(xor_accumulate(first, second)), [(6, b'\x33')])

    def testLinearity(self):
        geom = TableGeometry(64, 3)
        ka = keygen(geom, 10, b'abc', 3, self.rng)
        kb = keygen(geom, 20, b'xyz', 3, self.rng)
        together = combine([eval_full(k) for k in ka] + [eval_full(k) for k in kb])
        self.assertTrue(np.array_equal(together, xor_accumulate(combined(ka), combined(kb))))

    def testXorAccumulate(self):
        geom = TableGeometry(8, 2)
        acc = np.frombuffer(self.rng.bytes(16), dtype=np.uint8).reshape(8, 2)
        self.assertTrue(np.array_equal(xor_accumulate(acc, geom.zero_table()), acc))
        self.assertFalse(xor_accumulate(acc, acc).any())

        writes = [(1, b'aa'), (4, b'bb'), (7, b'cc')]
        table = geom.zero_table()
        for row, msg in writes:
            for key in keygen(geom, row, msg, 2, self.rng):
                xor_accumulate(table, eval_full(key), out=table)
        self.assertEqual(nonzero_rows(table), writes)

        with self.assertRaises(GeometryError):
            xor_accumulate(geom.zero_table(), TableGeometry(4, 2).zero_table())

    def testKeygenValidation(self):
        geom = TableGeometry(4, 1)
        with self.assertRaises(ValidationError):
            keygen(geom, 4, b'\x01', 2, self.rng)
        with self.assertRaises(ValidationError):
            keygen(geom, 0, b'\x01\x02', 2, self.rng)
        with self.assertRaises(ValidationError):
            keygen(geom, 0, b'\x01', 1, self.rng)

    def testGeometry(self):
        with self.assertRaises(GeometryError):
            TableGeometry(1, 4)
        with self.assertRaises(GeometryError):
            TableGeometry(4, 0)
        with self.assertRaises(GeometryError):
            TableGeometry(1024, 1024, max_table_bytes=1024 * 1023)
        with self.assertRaises(GeometryError):
            TableGeometry(64 * 1024 * 1024, 2)
        self.assertEqual(TableGeometry(1157, 145), TableGeometry(1157, 145, max_table_bytes=10**9))
        self.assertEqual(TableGeometry(3, 2).as_table(b'abcdef').shape, (3, 2))

    def testSerializedLayout(self):
        geom = TableGeometry(5, 2)
        keyset = keygen(geom, 4, b'\x10\x20', 2, self.rng)
        blobs = [serialize_key(k) for k in keyset]
        self.assertEqual(blobs[0][:KEY_HEADER.size], bytes([0, 5, 0, 0, 0, 2, 0, 0]))
        self.assertEqual(blobs[1][:KEY_HEADER.size], bytes([1, 5, 0, 0, 0, 2, 0, 0]))
        # the PRG share is sent expanded, same length as the correction share
        self.assertEqual(len(blobs[0]), len(blobs[1]))
        self.assertEqual(len(blobs[0]), KEY_HEADER.size + 10)
        for key, blob in zip(keyset, blobs):
            decoded = deserialize_key(blob)
            self.assertEqual(decoded, key)
            self.assertEqual(decoded.variant, EXPANDED)
            self.assertEqual(serialize_key(decoded), blob)

    def testDeserializeSeeded(self):
        geom = TableGeometry(5, 2)
        seed = bytes(range(16))
        blob = KEY_HEADER.pack(0, 5, 2, SEEDED) + seed
        key = deserialize_key(blob)
        self.assertEqual(eval_full(key).tobytes(), AesCtrPrg().expand(seed, 10))
        self.assertEqual(key, DpfKey(geom, 0, seed, SEEDED))

    def testDeserializeRejectsGarbage(self):
        for blob in [b'\x00\x01',
                     KEY_HEADER.pack(0, 5, 2, EXPANDED) + bytes(9),
                     KEY_HEADER.pack(0, 5, 2, SEEDED) + bytes(15),
                     KEY_HEADER.pack(0, 5, 2, 7) + bytes(10),
                     KEY_HEADER.pack(0, 1, 2, EXPANDED) + bytes(2)]:
            with self.assertRaises(DecodeError):
                deserialize_key(blob)

    def testPrg(self):
        prg = AesCtrPrg()
        seed = prg.random_seed(self.rng)
        self.assertEqual(len(seed), 16)
        self.assertEqual(prg.expand(seed, 100), prg.expand(seed, 100))
        self.assertEqual(prg.expand(seed, 100)[:40], prg.expand(seed, 40))
        self.assertNotEqual(prg.expand(seed, 32), prg.expand(bytes(16), 32))
        with self.assertRaises(ValidationError):
            prg.expand(b'short', 10)

    def testPluggablePrg(self):
        geom = TableGeometry(16, 4)
        keyset = keygen(geom, 9, b'\xde\xad\xbe\xef', 3, self.rng, prg=ShakePrg())
        self.assertEqual(nonzero_rows(combined(keyset)), [(9, b'\xde\xad\xbe\xef')])

if __name__ == '__main__':
    unittest.main()
