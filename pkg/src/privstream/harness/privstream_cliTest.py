import io
import os
import shutil
import tempfile
import unittest
from contextlib import redirect_stdout

import pytest

from privstream.dpf.dpf import TableGeometry
from privstream.epoch.epoch_state import ServerConfig
from privstream.epoch.write_table import WriteTable
from privstream.harness.privstream_cli import main, check_positive_float, build_parser, _servers
from privstream.shared.configWrapper import ConfigWrapper
from privstream.transport.server import AggregationServer, free_endpoints
from privstream.transport.wire import decode_query

class TestCase(unittest.TestCase):
    def setUp(self):
        self.tempDir = tempfile.mkdtemp()
        unittest.TestCase.setUp(self)

    def tearDown(self):
        unittest.TestCase.tearDown(self)
        shutil.rmtree(self.tempDir)

    def run_cli(self, *argv):
        out = io.StringIO()
        with redirect_stdout(out):
            code = main(list(argv))
        return code, out.getvalue()

    def path(self, name):
        return os.path.join(self.tempDir, name)

    def testLeakage(self):
        code, out = self.run_cli('leakage', '0.995', '0.999', '0.005')
        self.assertEqual(code, 0)
        self.assertIn('0.501502', out)
        self.assertIn('5.299313', out)
        code, out = self.run_cli('leakage', '1.5', '0.5', '0.005')
        self.assertEqual(code, 1)

    def testSweep(self):
        code, out = self.run_cli('sweep', '--ps', '0.9,0.995', '--qs', '0.999', '--out', self.path('sweep.csv'))
        self.assertEqual(code, 0)
        with open(self.path('sweep.csv')) as inFile:
            self.assertEqual(len(inFile.read().splitlines()), 3)

    def testSynthThenIngest(self):
        code, out = self.run_cli('synth', '--scenario', 'custom', '--stations', '12', '--total', '300', '--max', '50',
                                 '--min', '2', '--seed', '4', '--out', self.path('custom.csv'))
        self.assertEqual(code, 0)
        self.assertIn('12 stations, 300 vehicles', out)
        code, out = self.run_cli('ingest', self.path('custom.csv'))
        self.assertEqual(code, 0)
        self.assertIn('custom: 12 stations, 300 vehicles', out)

    def testIngestErrors(self):
        with open(self.path('bad.csv'), 'w') as outFile:
            outFile.write("station_id,count\na,1\nb,-2\n")
        self.assertEqual(self.run_cli('ingest', self.path('bad.csv'))[0], 1)
        self.assertEqual(self.run_cli('ingest', self.path('missing.csv'))[0], 2)

    def testPlan(self):
        code, out = self.run_cli('plan', '--owners', '222704', '--rows', '4096', '--cluster-size', '10')
        self.assertEqual(code, 0)
        self.assertIn('clusters                55', out)
        self.assertIn('servers                 550', out)

    def testBench(self):
        code, out = self.run_cli('bench', '--rows', '64', '--parties', '2', '--clients', '1', '--duration', '0.2',
                                 '--message-bytes', '8', '--seed', '1')
        self.assertEqual(code, 0)
        header, values = out.splitlines()
        self.assertEqual(header.split(',')[0], 'rows')
        self.assertEqual(values.split(',')[:2], ['64', '2'])

    def testE2E(self):
        code, out = self.run_cli('e2e', '--clients', '10', '--rows', '512', '--parties', '2', '--seed', '2',
                                 '--out', self.path('e2e.csv'))
        self.assertEqual(code, 0)
        self.assertIn('inprocess backend: 10 clients', out)
        self.assertTrue(os.path.exists(self.path('e2e.csv')))

    def testAccuracyWorkflow(self):
        outDir = self.path('accuracy')
        code, out = self.run_cli('accuracy', self.path('jobstore'), '--scenarios', 'off-peak', '--replicates', '2',
                                 '--mode', 'binomial', '--seed', '7', '--out', outDir)
        self.assertEqual(code, 0)
        self.assertEqual(sorted(os.listdir(outDir)), ['off-peak_seed7.csv', 'off-peak_seed8.csv', 'summary.csv'])
        self.assertEqual(len(out.splitlines()), 2)

    def testPositiveFloat(self):
        self.assertEqual(check_positive_float('2.5'), 2.5)
        with self.assertRaises(Exception):
            check_positive_float('0')

    def testPeersNamesTheServerList(self):
        peers = '127.0.0.1:7400,127.0.0.1:7401,127.0.0.1:7402'
        options = build_parser().parse_args(['serve', '--server-id', '1', '--peers', peers])
        self.assertEqual(options.servers, peers)
        self.assertEqual(_servers(options, ConfigWrapper.load()),
                         [('127.0.0.1', 7400), ('127.0.0.1', 7401), ('127.0.0.1', 7402)])
        options = build_parser().parse_args(['serve', '--server-id', '0', '--servers', peers])
        self.assertEqual(options.servers, peers)

    @pytest.mark.network
    def testQueryClientClose(self):
        queryPath = self.path('query.bin')
        code, out = self.run_cli('query', '--labels', 'a,b,c', '--rows', '256', '--message-bytes', '2',
                                 '--p', '1', '--q', '0', '--out', queryPath)
        self.assertEqual(code, 0)
        with open(queryPath, 'rb') as inFile:
            query = decode_query(inFile.read())
        self.assertEqual(query.attribute_labels, ['a', 'b', 'c'])

        endpoints = free_endpoints(2)
        servers = ','.join('{}:{}'.format(h, p) for h, p in endpoints)
        for i in range(2):
            config = ServerConfig(i, endpoints, TableGeometry(256, 2), 1000, 3000, 'off', manual_epochs=True)
            self.addCleanup(AggregationServer(config, query=query).start().stop)

        common = ['--servers', servers, '--query-file', queryPath, '--epoch', '0']
        self.assertEqual(self.run_cli('client', '--station', 'b', '--seed', '3', *common)[0], 0)
        self.assertEqual(self.run_cli('client', '--dummy', *common)[0], 0)
        self.assertEqual(self.run_cli('client', '--station', 'z', *common)[0], 1)

        code, out = self.run_cli('close', '--servers', servers, '--epoch', '0', '--query-file', queryPath,
                                 '--out', self.path('epoch0.pswt'))
        self.assertEqual(code, 0)
        self.assertEqual(out.splitlines(), ['station,raw_yes,estimate', 'a,0,0.0', 'b,1,1.0', 'c,0,0.0'])
        self.assertEqual(len(WriteTable.load(self.path('epoch0.pswt')).nonzero_rows), 1)

if __name__ == '__main__':
    unittest.main()
