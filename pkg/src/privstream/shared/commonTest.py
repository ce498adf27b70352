import os
import shutil
import tempfile
import unittest
from unittest import mock

import numpy as np

from privstream.shared.common import parseSize, makeURL, make_rng, random_bytes, checkProbability
from privstream.shared.configWrapper import ConfigWrapper, PORT_BASE_ENV
from privstream.shared.errors import ValidationError, InvalidParameterError

class TestCase(unittest.TestCase):
    def setUp(self):
        self.tempDir = tempfile.mkdtemp()
        unittest.TestCase.setUp(self)

    def tearDown(self):
        unittest.TestCase.tearDown(self)
        shutil.rmtree(self.tempDir)

    def writeConfig(self, body):
        path = os.path.join(self.tempDir, 'config.xml')
        with open(path, 'w') as outFile:
            outFile.write("<privstream_workflow_config>{}</privstream_workflow_config>".format(body))
        return ConfigWrapper.load(path)

    def testParseSize(self):
        self.assertEqual(parseSize('64Mi'), 64 * 1024 * 1024)
        self.assertEqual(parseSize(4096), 4096)
        self.assertIsNone(parseSize(None))
        with self.assertRaises(ValidationError):
            parseSize('lots')
        with self.assertRaises(ValidationError):
            parseSize(0)

    def testMakeURL(self):
        self.assertEqual(makeURL('s3://bucket/x.csv'), 's3://bucket/x.csv')
        self.assertEqual(makeURL('x.csv'), 'file://' + os.path.abspath('x.csv'))

    def testRngStreams(self):
        rng = np.random.default_rng(1)
        self.assertIs(make_rng(rng), rng)
        self.assertEqual(make_rng(5).bytes(8), make_rng(5).bytes(8))
        self.assertEqual(make_rng((5, 1)).bytes(8), make_rng([5, 1]).bytes(8))
        self.assertNotEqual(make_rng((5, 1)).bytes(8), make_rng((5, 2)).bytes(8))
        self.assertEqual(len(random_bytes(None, 32)), 32)

    def testCheckProbability(self):
        self.assertEqual(checkProbability('0.25', 'p'), 0.25)
        for bad in [-0.01, 1.01, float('nan'), 'x', None]:
            with self.assertRaises(InvalidParameterError):
                checkProbability(bad, 'p')

    def testDefaultConfig(self):
        config = ConfigWrapper.load()
        self.assertEqual((config.getP(), config.getQ(), config.getPiA()), (0.995, 0.999, 0.005))
        self.assertEqual((config.getRows(), config.getMessageBytes()), (512, 160))
        self.assertEqual(config.getMaxTableBytes(), 64 * 1024 * 1024)
        self.assertEqual(config.getAuditMode(), 'eager')
        params = config.getSyntheticParams()
        self.assertEqual((params['stations'], params['total_vehicles'], params['max_per_station']),
                         (1157, 222704, 860))

    def testMissingElementsFallBackToDefaults(self):
        config = self.writeConfig("")
        self.assertEqual(config.getEpochMs(), ConfigWrapper.defaultEpochMs)
        self.assertEqual(config.getDummyPolicy(), 'accept')
        self.assertEqual(config.getBenchParams()['parties'], ConfigWrapper.defaultBenchParties)

    def testBadValues(self):
        with self.assertRaises(ValidationError):
            self.writeConfig('<privacy p="1.5"/>').getP()
        with self.assertRaises(ValidationError):
            self.writeConfig('<geometry rows="many"/>').getRows()
        with self.assertRaises(ValidationError):
            self.writeConfig('<epoch duration_ms="50"/>').getEpochMs()
        with self.assertRaises(ValidationError):
            self.writeConfig('<audit mode="sometimes"/>').getAuditMode()
        with self.assertRaises(ValidationError):
            ConfigWrapper.load(os.path.join(self.tempDir, 'nope.xml'))

    def testPortBaseEnvironment(self):
        config = self.writeConfig('<server port_base="9000"/>')
        with mock.patch.dict(os.environ, {PORT_BASE_ENV: ''}):
            self.assertEqual(config.getPortBase(), 9000)
        with mock.patch.dict(os.environ, {PORT_BASE_ENV: '9100'}):
            self.assertEqual(config.getPortBase(), 9100)
        with mock.patch.dict(os.environ, {PORT_BASE_ENV: 'ninety'}):
            with self.assertRaises(ValidationError):
                config.getPortBase()

if __name__ == '__main__':
    unittest.main()
