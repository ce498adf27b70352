#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Station datasets: synthetic traffic counts shaped like a city district at
rush hour or off peak, and CSV import/export of real per-station counts.
"""
import csv
import os
import logging

import numpy as np

from privstream.shared.common import make_rng
from privstream.shared.configWrapper import ConfigWrapper
from privstream.shared.errors import DatasetError, InvalidParameterError

_log = logging.getLogger(__name__)

CSV_HEADER = ['station_id', 'count']

RUSH_HOUR = 'rush-hour'
OFF_PEAK = 'off-peak'
SCENARIOS = (RUSH_HOUR, OFF_PEAK)

class StationDataset(object):
    """ vehicle counts per station """

    def __init__(self, stations, scenario_label='custom'):
        self.stations = []
        for stationId, count in stations:
            if isinstance(count, bool) or not isinstance(count, (int, np.integer)) or count < 0:
                raise DatasetError("Station {} has count {!r}, counts must be nonnegative integers".format(
                    stationId, count))
            self.stations.append((str(stationId), int(count)))
        if not self.stations:
            raise DatasetError("A dataset needs at least one station")
        self.scenario_label = scenario_label

    @property
    def total_vehicles(self):
        return sum(c for s, c in self.stations)

    @property
    def station_ids(self):
        return [s for s, c in self.stations]

    @property
    def counts(self):
        return np.array([c for s, c in self.stations], dtype=np.int64)

    def __len__(self):
        return len(self.stations)

    def __eq__(self, other):
        if not isinstance(other, StationDataset):
            return NotImplemented
        return self.stations == other.stations

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    def __repr__(self):
        return "StationDataset({}, {} stations, {} vehicles)".format(self.scenario_label, len(self),
                                                                     self.total_vehicles)

def _spread(weights, total, lower, upper):
    """ real-valued counts proportional to weights, summing to total, each in [lower, upper] """
    target = weights / weights.sum() * total
    for i in range(len(weights) + 1):
        clipped = np.clip(target, lower, upper)
        excess = total - clipped.sum()
        if abs(excess) < 1e-7:
            return clipped
        free = clipped < upper if excess > 0 else clipped > lower
        clipped[free] += excess * weights[free] / weights[free].sum()
        target = clipped
    return np.clip(target, lower, upper)

def _largest_remainder(values, total, upper):
    counts = np.floor(values + 1e-9).astype(np.int64)
    remainder = int(total - counts.sum())
    if remainder > 0:
        fraction = values - counts
        fraction[counts >= upper] = -1.0
        # stable sort keeps ties in station order
        order = np.argsort(-fraction, kind='stable')
        counts[order[:remainder]] += 1
    elif remainder < 0:
        fraction = values - counts
        order = np.argsort(fraction, kind='stable')
        counts[order[:-remainder]] -= 1
    return counts

def synth_dataset(stations, total_vehicles, max_per_station, min_per_station, rng=None, shape=2.5,
                  scenario_label='synthetic'):
    """ skewed (Pareto) station counts with the exact total and every count in [min, max] """
    if stations < 1:
        raise InvalidParameterError("Need at least one station, got {}".format(stations))
    if min_per_station < 0 or max_per_station < min_per_station:
        raise InvalidParameterError("Station bounds [{}, {}] are empty".format(min_per_station, max_per_station))
    if not stations * min_per_station <= total_vehicles <= stations * max_per_station:
        raise InvalidParameterError("{} vehicles cannot be spread over {} stations holding {} to {} each".format(
            total_vehicles, stations, min_per_station, max_per_station))
    if shape <= 0:
        raise InvalidParameterError("Pareto shape must be positive, got {}".format(shape))
    rng = make_rng(rng)
    weights = rng.pareto(shape, stations) + 1.0
    values = _spread(weights, float(total_vehicles), float(min_per_station), float(max_per_station))
    counts = _largest_remainder(values, total_vehicles, max_per_station)
    assert counts.sum() == total_vehicles
    width = len(str(stations - 1))
    return StationDataset([("station-{:0{}d}".format(i, width), int(c)) for i, c in enumerate(counts)],
                          scenario_label)

def rush_hour_dataset(config=None, rng=None):
    """ 1,157 stations, 222,704 vehicles, 1 to 860 per station (from the config) """
    params = (config or ConfigWrapper.load()).getSyntheticParams()
    return synth_dataset(params['stations'], params['total_vehicles'], params['max_per_station'],
                         params['min_per_station'], rng, params['shape'], RUSH_HOUR)

def off_peak_dataset(config=None, rng=None):
    """ 1,017 stations with off_peak_fraction of the rush hour total.  The total is a
    modelling choice, not an observed figure """
    params = (config or ConfigWrapper.load()).getSyntheticParams()
    total = int(round(params['off_peak_fraction'] * params['total_vehicles']))
    total = max(total, params['off_peak_stations'] * params['min_per_station'])
    return synth_dataset(params['off_peak_stations'], total, params['max_per_station'], params['min_per_station'],
                         rng, params['shape'], OFF_PEAK + ' (modelled total)')

def scenario_dataset(scenario, config=None, rng=None):
    if scenario == RUSH_HOUR:
        return rush_hour_dataset(config, rng)
    if scenario == OFF_PEAK:
        return off_peak_dataset(config, rng)
    raise InvalidParameterError("Unknown scenario {}, expected one of {}".format(scenario, ', '.join(SCENARIOS)))

def ingest_csv(path):
    """ dataset from a "station_id,count" CSV """
    with open(path, newline='') as inFile:
        reader = csv.reader(inFile)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError("{} is empty".format(path))
        if [h.strip() for h in header] != CSV_HEADER:
            raise DatasetError("expected header {}, got {}".format(','.join(CSV_HEADER), ','.join(header)), line=1)
        stations = []
        seen = set()
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DatasetError("expected 2 columns, got {}".format(len(row)), line=line)
            stationId = row[0].strip()
            if not stationId:
                raise DatasetError("empty station id", line=line)
            if stationId in seen:
                raise DatasetError("station {} appears twice".format(stationId), line=line)
            try:
                count = int(row[1].strip())
            except ValueError:
                raise DatasetError("count {!r} is not an integer".format(row[1]), line=line)
            if count < 0:
                raise DatasetError("count {} is negative".format(count), line=line)
            seen.add(stationId)
            stations.append((stationId, count))
    if not stations:
        raise DatasetError("{} has a header but no stations".format(path))
    label = os.path.splitext(os.path.basename(path))[0]
    _log.info("Read {} stations ({} vehicles) from {}".format(len(stations), sum(c for s, c in stations), path))
    return StationDataset(stations, label)

def export_csv(dataset, path):
    dirName = os.path.dirname(path)
    if dirName and not os.path.isdir(dirName):
        os.makedirs(dirName)
    with open(path, 'w', newline='') as outFile:
        writer = csv.writer(outFile, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for stationId, count in dataset.stations:
            writer.writerow([stationId, count])
