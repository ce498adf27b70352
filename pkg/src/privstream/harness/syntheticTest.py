import os
import shutil
import tempfile
import unittest

from hypothesis import given, settings, strategies as st

from privstream.harness.synthetic import StationDataset, synth_dataset, rush_hour_dataset, off_peak_dataset
from privstream.harness.synthetic import scenario_dataset, ingest_csv, export_csv, RUSH_HOUR, OFF_PEAK
from privstream.shared.configWrapper import ConfigWrapper
from privstream.shared.errors import DatasetError, InvalidParameterError

class TestCase(unittest.TestCase):
    def setUp(self):
        self.tempDir = tempfile.mkdtemp()
        self.config = ConfigWrapper.load()
        unittest.TestCase.setUp(self)

    def tearDown(self):
        unittest.TestCase.tearDown(self)
        shutil.rmtree(self.tempDir)

    def writeCsv(self, name, text):
        path = os.path.join(self.tempDir, name)
        with open(path, 'w') as outFile:
            outFile.write(text)
        return path

    def testRushHourShape(self):
        dataset = rush_hour_dataset(self.config, 11)
        self.assertEqual(len(dataset), 1157)
        self.assertEqual(dataset.total_vehicles, 222704)
        self.assertGreaterEqual(dataset.counts.min(), 1)
        self.assertLessEqual(dataset.counts.max(), 860)
        self.assertEqual(dataset.scenario_label, RUSH_HOUR)
        self.assertEqual(len(set(dataset.station_ids)), 1157)

    def testOffPeakShape(self):
        dataset = off_peak_dataset(self.config, 11)
        self.assertEqual(len(dataset), 1017)
        self.assertEqual(dataset.total_vehicles, 22270)
        self.assertTrue(dataset.scenario_label.startswith(OFF_PEAK))
        self.assertLess(dataset.total_vehicles, rush_hour_dataset(self.config, 11).total_vehicles)

    def testSeedDeterminesDataset(self):
        self.assertEqual(scenario_dataset(RUSH_HOUR, self.config, 3), scenario_dataset(RUSH_HOUR, self.config, 3))
        self.assertNotEqual(scenario_dataset(RUSH_HOUR, self.config, 3), scenario_dataset(RUSH_HOUR, self.config, 4))
        with self.assertRaises(InvalidParameterError):
            scenario_dataset('midnight', self.config, 3)

    def testSingleStation(self):
        dataset = synth_dataset(1, 42, 100, 1, 5)
        self.assertEqual(dataset.stations, [('station-0', 42)])

    def testInfeasibleBounds(self):
        with self.assertRaises(InvalidParameterError):
            synth_dataset(10, 5, 100, 1)
        with self.assertRaises(InvalidParameterError):
            synth_dataset(10, 1001, 100, 1)
        with self.assertRaises(InvalidParameterError):
            synth_dataset(0, 0, 100, 0)
        with self.assertRaises(InvalidParameterError):
            synth_dataset(10, 50, 3, 5)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=1, max_value=200), st.integers(min_value=0, max_value=5),
           st.integers(min_value=0, max_value=50), st.floats(min_value=0.0, max_value=1.0), st.integers(0, 2**32))
    def testExactTotalWithinBounds(self, stations, low, width, fill, seed):
        high = low + width
        total = stations * low + int(round(fill * stations * width))
        dataset = synth_dataset(stations, total, high, low, seed)
        self.assertEqual(dataset.total_vehicles, total)
        self.assertGreaterEqual(dataset.counts.min(), low)
        self.assertLessEqual(dataset.counts.max(), high)

    def testCountsValidated(self):
        for bad in [-1, 2.5, True, '3']:
            with self.assertRaises(DatasetError):
                StationDataset([('a', bad)])
        with self.assertRaises(DatasetError):
            StationDataset([])

    def testCsvRoundTrip(self):
        dataset = synth_dataset(25, 500, 60, 0, 9)
        path = os.path.join(self.tempDir, 'sub', 'district.csv')
        export_csv(dataset, path)
        again = ingest_csv(path)
        self.assertEqual(again, dataset)
        self.assertEqual(again.scenario_label, 'district')

    def testCsvErrorsNameTheLine(self):
        path = self.writeCsv('bad.csv', "station_id,count\na,1\nb,2\nc,3\nd,x\n")
        with self.assertRaises(DatasetError) as cm:
            ingest_csv(path)
        self.assertEqual(cm.exception.line, 5)
        self.assertIn('line 5', str(cm.exception))

    def testCsvRejects(self):
        cases = {
            'empty.csv': "",
            'header.csv': "id,vehicles\na,1\n",
            'columns.csv': "station_id,count\na,1,2\n",
            'dup.csv': "station_id,count\na,1\na,2\n",
            'negative.csv': "station_id,count\na,-4\n",
            'noid.csv': "station_id,count\n ,4\n",
            'nostations.csv': "station_id,count\n",
        }
        for name, text in cases.items():
            with self.assertRaises(DatasetError):
                ingest_csv(self.writeCsv(name, text))

    def testCsvAllowsZeroAndBlankLines(self):
        dataset = ingest_csv(self.writeCsv('zero.csv', "station_id,count\nx,0\n\ny, 7\n"))
        self.assertEqual(dataset.stations, [('x', 0), ('y', 7)])

if __name__ == '__main__':
    unittest.main()
