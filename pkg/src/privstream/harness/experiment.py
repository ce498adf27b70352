#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Accuracy experiments: every vehicle answers "were you at station s?" for
all stations through randomized response, the analyst inverts the noisy yes
counts, and we score the estimates against the true counts.
"""
import csv
import io
import math
import logging
from collections import namedtuple

import numpy as np

from privstream.rr.randomized_response import PrivacyParams, randomize_bits, estimate_counts, leakage, leakage_sweep
from privstream.rr.randomized_response import response_probabilities
from privstream.shared.common import make_rng
from privstream.shared.errors import InvalidParameterError

_log = logging.getLogger(__name__)

VEHICLE = 'vehicle'
BINOMIAL = 'binomial'
EXPECTATION = 'expectation'
MODES = (VEHICLE, BINOMIAL, EXPECTATION)

# bits randomized per numpy call in vehicle mode
VEHICLE_CHUNK_BITS = 1 << 22

SUMMARY_COLUMNS = ['Scenario', 'Seed', '# Stations', 'Avg Relative Error', 'Avg Abs Relative Error', 'Avg RMSE',
                   'Excluded Stations']
STATION_COLUMNS = ['station_id', 'true_count', 'raw_yes', 'estimated_count', 'signed_relative_error',
                   'abs_relative_error', 'rmse']

StationResult = namedtuple('StationResult', ['station_id', 'true_count', 'raw_yes', 'estimated_count',
                                             'signed_relative_error', 'abs_relative_error', 'rmse'])

def _fmt(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)

class ExperimentResult(object):
    """ per-station outcomes of one (dataset, params, seed) run.  Relative errors are
    averaged over the stations with a nonzero true count; excluded counts the others """

    def __init__(self, per_station, params, seed, scenario='', mode=VEHICLE, trials=1):
        self.per_station = list(per_station)
        self.params = params
        self.seed = seed
        self.scenario = scenario
        self.mode = mode
        self.trials = trials
        included = [s for s in self.per_station if s.signed_relative_error is not None]
        self.excluded = len(self.per_station) - len(included)
        if included:
            self.avg_signed_relative_error = float(np.mean([s.signed_relative_error for s in included]))
            self.avg_abs_relative_error = float(np.mean([s.abs_relative_error for s in included]))
        else:
            self.avg_signed_relative_error = self.avg_abs_relative_error = float('nan')
        self.avg_rmse = float(np.mean([s.rmse for s in self.per_station]))

    def summary_row(self):
        return {'Scenario': self.scenario, 'Seed': self.seed, '# Stations': len(self.per_station),
                'Avg Relative Error': self.avg_signed_relative_error,
                'Avg Abs Relative Error': self.avg_abs_relative_error,
                'Avg RMSE': self.avg_rmse, 'Excluded Stations': self.excluded}

    def to_csv(self):
        out = io.StringIO()
        out.write('# scenario={} seed={} p={!r} q={!r} mode={} trials={}\n'.format(
            self.scenario, self.seed, self.params.p, self.params.q, self.mode, self.trials))
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(STATION_COLUMNS)
        for s in self.per_station:
            writer.writerow([_fmt(v) for v in s])
        return out.getvalue()

    def write_csv(self, path):
        with open(path, 'w', newline='') as outFile:
            outFile.write(self.to_csv())

    def __repr__(self):
        return "ExperimentResult({}, seed={}, avg rel {:.6f}, avg rmse {:.6f})".format(
            self.scenario, self.seed, self.avg_signed_relative_error, self.avg_rmse)

def summary_csv(rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    return out.getvalue()

def _vehicle_yes_counts(counts, params, rng):
    """ every vehicle randomizes its whole one-hot station vector """
    stations = len(counts)
    owners = np.repeat(np.arange(stations), counts)
    raw = np.zeros(stations, dtype=np.int64)
    chunk = max(1, VEHICLE_CHUNK_BITS // stations)
    for start in range(0, len(owners), chunk):
        block = owners[start:start + chunk]
        truth = np.zeros((len(block), stations), dtype=np.bool_)
        truth[np.arange(len(block)), block] = True
        raw += randomize_bits(truth, params, rng).sum(axis=0)
    return raw

def _binomial_yes_counts(counts, n, params, rng):
    """ same law as the vehicle simulation, drawn per station """
    yesGivenA, yesGivenNotA = response_probabilities(params)
    return rng.binomial(counts, yesGivenA) + rng.binomial(n - counts, yesGivenNotA)

def simulate_yes_counts(counts, params, rng, mode=VEHICLE):
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    if mode == VEHICLE:
        return _vehicle_yes_counts(counts, params, rng)
    if mode == BINOMIAL:
        return _binomial_yes_counts(counts, n, params, rng)
    if mode == EXPECTATION:
        yesGivenA, yesGivenNotA = response_probabilities(params)
        return counts * yesGivenA + (n - counts) * yesGivenNotA
    raise InvalidParameterError("Unknown simulation mode {}, expected one of {}".format(mode, ', '.join(MODES)))

def run_accuracy_experiment(dataset, params, trials=1, seed=None, mode=VEHICLE):
    """ estimate every station's count from simulated randomized responses """
    if trials < 1:
        raise InvalidParameterError("Need at least one trial, got {}".format(trials))
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0] >> 1)
    params = PrivacyParams(*params)
    counts = dataset.counts
    n = int(counts.sum())
    if n == 0:
        raise InvalidParameterError("Dataset {} has no vehicles".format(dataset.scenario_label))
    rng = make_rng(seed)

    raw = np.zeros((trials, len(counts)), dtype=np.float64)
    for t in range(trials):
        raw[t] = simulate_yes_counts(counts, params, rng, mode)
    estimates = estimate_counts(raw, n, params)
    errors = estimates - counts
    rmse = np.sqrt(np.mean(errors ** 2, axis=0))

    perStation = []
    with np.errstate(divide='ignore', invalid='ignore'):
        relative = errors / counts
    for i, (stationId, count) in enumerate(dataset.stations):
        if count == 0:
            signed = absolute = None
        else:
            signed = float(np.mean(relative[:, i]))
            absolute = float(np.mean(np.abs(relative[:, i])))
        perStation.append(StationResult(stationId, count, float(np.mean(raw[:, i])), float(np.mean(estimates[:, i])),
                                        signed, absolute, float(rmse[i])))
    result = ExperimentResult(perStation, params, seed, dataset.scenario_label, mode, trials)
    if result.excluded:
        _log.info("{} stations with no vehicles left out of the relative error".format(result.excluded))
    return result

def run_leakage_report(params, pi_a):
    return leakage(PrivacyParams(*params), pi_a)

def format_leakage_report(report):
    """ the report as aligned text, one quantity per line """
    lines = [
        "p = {}, q = {}, pi_A = {}".format(report.params.p, report.params.q, report.pi_a),
        "{:<12} {:.6f}".format("P(A|Yes)", report.p_a_given_yes),
        "{:<12} {:.6f}".format("P(~A|Yes)", report.p_not_a_given_yes),
        "{:<12} {}".format("epsilon", "inf" if math.isinf(report.epsilon) else "{:.6f}".format(report.epsilon)),
    ]
    if report.p_a_given_no is not None:
        lines.append("{:<12} {:.6f}".format("P(A|No)", report.p_a_given_no))
        lines.append("{:<12} {:.6f}".format("P(~A|No)", report.p_not_a_given_no))
    if report.no_plausible_deniability:
        lines.append("no plausible deniability: a Yes answer is always truthful")
    return '\n'.join(lines)

def leakage_sweep_csv(ps, qs, pi_a):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(['p', 'q', 'pi_a', 'p_a_given_yes', 'p_not_a_given_yes', 'epsilon', 'p_a_given_no'])
    for r in leakage_sweep(ps, qs, pi_a):
        writer.writerow([_fmt(float(r.params.p)), _fmt(float(r.params.q)), _fmt(float(pi_a)),
                         _fmt(r.p_a_given_yes), _fmt(r.p_not_a_given_yes), _fmt(r.epsilon), _fmt(r.p_a_given_no)])
    return out.getvalue()
