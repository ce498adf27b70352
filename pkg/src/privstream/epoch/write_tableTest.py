import os
import shutil
import tempfile
import unittest

import numpy as np

from privstream.dpf.dpf import TableGeometry
from privstream.epoch.write_table import WriteTable, encode_response, decode_response, tally_write_table
from privstream.epoch.write_table import decoded_responses, PRESENCE_MARKER
from privstream.rr.randomized_response import PrivatizedVector
from privstream.shared.errors import GeometryError, DecodeError

class TestCase(unittest.TestCase):
    def setUp(self):
        self.tempDir = tempfile.mkdtemp()
        unittest.TestCase.setUp(self)

    def tearDown(self):
        unittest.TestCase.tearDown(self)
        shutil.rmtree(self.tempDir)

    def testEncodeLayout(self):
        # bit i of the vector is bit (i % 8) of byte i // 8
        cell = encode_response([1, 0, 0, 0, 0, 0, 0, 0, 0, 1], 4)
        self.assertEqual(cell, bytes([0x01, 0x02, 0x00, PRESENCE_MARKER]))
        self.assertEqual(encode_response([0, 0, 0], 2), bytes([0x00, PRESENCE_MARKER]))
        # no spare byte: no marker, and an all-zero answer vanishes
        self.assertEqual(encode_response([1, 1], 1), bytes([0x03]))
        self.assertEqual(encode_response([0, 0], 1), bytes([0x00]))
        with self.assertRaises(GeometryError):
            encode_response([1] * 9, 1)

    def testDecode(self):
        vec = PrivatizedVector([1, 0, 1, 1, 0, 0, 1, 0, 1])
        self.assertEqual(decode_response(encode_response(vec, 5), 9), vec)
        self.assertEqual(decode_response(encode_response([0] * 9, 5), 9), PrivatizedVector([0] * 9))
        self.assertIsNone(decode_response(bytes(5), 9))
        self.assertEqual(decode_response(bytes([0x05]), 3).bits, (1, 0, 1))
        for bad in [bytes([0x01, 0x00, 0x00]),    # marker missing
                    bytes([0x01, 0x01, 0x01]),    # junk between answer and marker
                    bytes([0x81, 0x00, 0x01])]:   # padding bit past attribute 3
            with self.assertRaises(DecodeError):
                decode_response(bad, 3)

    def testCollidedWritesAreUndecodable(self):
        a = np.frombuffer(encode_response([1, 0, 1], 2), dtype=np.uint8)
        b = np.frombuffer(encode_response([0, 1, 1], 2), dtype=np.uint8)
        with self.assertRaises(DecodeError):
            decode_response((a ^ b).tobytes(), 3)

    def testTally(self):
        geom = TableGeometry(6, 2)
        table = geom.zero_table()
        answers = [[1, 0, 1], [1, 1, 0], [0, 0, 0]]
        for row, answer in zip([0, 2, 5], answers):
            table[row] = np.frombuffer(encode_response(answer, 2), dtype=np.uint8)
        table[3] = [0x07, 0x00]
        tally = tally_write_table(WriteTable(4, geom, table), 3)
        self.assertEqual(list(tally.raw_yes_counts), [2, 1, 1])
        self.assertEqual(tally.respondents, 3)
        self.assertEqual(tally.undecodable_rows, 1)
        self.assertEqual(decoded_responses(table, 3), sorted(tuple(a) for a in answers))

    def testSaveLoad(self):
        geom = TableGeometry(7, 3)
        table = np.arange(21, dtype=np.uint8).reshape(7, 3)
        wt = WriteTable(99, geom, table)
        path = os.path.join(self.tempDir, "out", "epoch_99.tbl")
        wt.save(path)
        loaded = WriteTable.load(path)
        self.assertEqual(loaded, wt)
        self.assertEqual(loaded.epoch_id, 99)
        self.assertEqual(loaded.rows[1], bytes([3, 4, 5]))

        with open(path, 'r+b') as fh:
            fh.write(b'XXXX')
        with self.assertRaises(DecodeError):
            WriteTable.load(path)

    def testWriteTableReadOnly(self):
        wt = WriteTable(0, TableGeometry(2, 1), bytes([1, 0]))
        with self.assertRaises(ValueError):
            wt.table[0, 0] = 9
        self.assertEqual(wt.nonzero_rows, [(0, b'\x01')])

if __name__ == '__main__':
    unittest.main()
