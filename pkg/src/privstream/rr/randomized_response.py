#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Two-coin randomized response.

A data owner flips a first coin with heads probability p.  On heads they answer
truthfully, on tails they flip a second coin with heads probability q and answer
"yes" (1) on heads, "no" (0) on tails.  So

    Pr[1 | truth=1] = p + (1-p)q
    Pr[1 | truth=0] = (1-p)q

and an analyst who sees Yhat "yes" answers out of N recovers the true count with

    Y = (Yhat - (1-p)qN) / p

This module holds the mechanism, that estimator, the accuracy metrics the
experiments report and the closed form privacy / posterior leakage numbers.
Nothing here keeps state: randomness always comes from a caller-owned numpy
Generator.
"""
import math
import logging
from collections import namedtuple

import numpy as np

from privstream.shared.common import checkProbability
from privstream.shared.errors import ValidationError, InvalidParameterError, InfiniteEpsilonError
from privstream.shared.errors import UndefinedRelativeError, ZeroProbabilityError

_log = logging.getLogger(__name__)

class PrivacyParams(namedtuple('PrivacyParams', ['p', 'q'])):
    """ the two coin biases.  Construction with (1-p)q = 0 is allowed (p=1 is handy
    for noiseless tests) but flagged: such answers carry no plausible deniability """
    __slots__ = ()

    def __new__(cls, p, q):
        self = super(PrivacyParams, cls).__new__(cls, checkProbability(p, "p"), checkProbability(q, "q"))
        if self.no_plausible_deniability:
            _log.warning("Privacy parameters p={} q={} give no plausible deniability: a \"yes\" answer "
                         "is never forced, so epsilon is infinite".format(self.p, self.q))
        return self

    @property
    def forced_yes(self):
        """ (1-p)q, the probability a respondent without the attribute says yes """
        return (1.0 - self.p) * self.q

    @property
    def no_plausible_deniability(self):
        return self.forced_yes == 0.0

PopulationEstimate = namedtuple('PopulationEstimate', ['raw_yes_count', 'respondent_count', 'estimate'])

class LeakageReport(namedtuple('LeakageReport', ['p_a_given_yes', 'p_not_a_given_yes', 'epsilon', 'pi_a',
                                                 'p_yes', 'p_no', 'p_a_given_no', 'p_not_a_given_no',
                                                 'no_plausible_deniability', 'params'])):
    """ posterior leakage of a single answer.  The "No" side fields are None when a "no"
    answer is impossible """
    __slots__ = ()

class PrivatizedVector(object):
    """ An ordered bit vector, one bit per sensitive attribute.  Only 0 and 1 can be stored:
    anything else is rejected at construction, and the vector is read-only afterwards. """

    def __init__(self, bits):
        arr = np.asarray(bits.as_array() if isinstance(bits, PrivatizedVector) else bits)
        if arr.ndim != 1:
            raise ValidationError("A privatized vector must be one dimensional, got shape {}".format(arr.shape))
        if arr.size == 0:
            raise ValidationError("A privatized vector needs at least one attribute")
        if arr.dtype != np.bool_:
            if arr.dtype.kind not in 'iu':
                raise ValidationError("A privatized vector holds only 0 and 1, got values of type {}".format(arr.dtype))
            bad = np.flatnonzero((arr != 0) & (arr != 1))
            if len(bad):
                raise ValidationError("A privatized vector holds only 0 and 1, got {} at position {}".format(
                    arr[bad[0]], bad[0]))
        self._bits = arr.astype(np.bool_)
        self._bits.flags.writeable = False

    @property
    def attribute_count(self):
        return int(self._bits.size)

    @property
    def bits(self):
        return tuple(int(b) for b in self._bits)

    def as_array(self):
        """ read-only numpy bool view """
        return self._bits

    def popcount(self):
        return int(np.count_nonzero(self._bits))

    def __len__(self):
        return self.attribute_count

    def __iter__(self):
        return iter(self.bits)

    def __eq__(self, other):
        if not isinstance(other, PrivatizedVector):
            return NotImplemented
        return np.array_equal(self._bits, other._bits)

    def __hash__(self):
        return hash(self._bits.tobytes())

    def __repr__(self):
        return "PrivatizedVector({})".format(''.join(str(b) for b in self.bits))

def _check_bit(truth):
    if truth not in (0, 1) or isinstance(truth, float):
        raise ValidationError("truth must be 0 or 1, got {!r}".format(truth))
    return int(truth)

def randomize_bit(truth, params, rng):
    """ one answer: truth with probability p, otherwise the q-biased second coin """
    truth = _check_bit(truth)
    if rng.random() < params.p:
        return truth
    return 1 if rng.random() < params.q else 0

def randomize_bits(truth, params, rng):
    """ element-wise randomize_bit over a numpy array of any shape, returns a bool array.
    Both coins are drawn for every element so the stream consumed only depends on the shape """
    truth = np.asarray(truth, dtype=np.bool_)
    first = rng.random(truth.shape) < params.p
    second = rng.random(truth.shape) < params.q
    return np.where(first, truth, second)

def randomize_vector(truth, params, rng):
    """ privatize a full attribute vector.  truth may be a PrivatizedVector or any sequence of 0/1 """
    truth = PrivatizedVector(truth)
    return PrivatizedVector(randomize_bits(truth.as_array(), params, rng))

def response_probabilities(params):
    """ (Pr[1|truth=1], Pr[1|truth=0]) """
    return params.p + params.forced_yes, params.forced_yes

def _check_estimator(n, params):
    if params.p == 0:
        raise InvalidParameterError("The population estimator is undefined for p=0: answers carry no information")
    if n <= 0:
        raise InvalidParameterError("The respondent count must be positive, got {}".format(n))

def estimate_population(raw_yes_count, n, params):
    """ unbiased estimate of how many of the n respondents hold the attribute.  raw_yes_count
    may be real valued (an analytic expectation).  The estimate is not clamped to [0, n] """
    _check_estimator(n, params)
    if not (0 <= raw_yes_count <= n):
        raise InvalidParameterError("The raw yes count must be between 0 and the respondent count {}, got {}".format(
            n, raw_yes_count))
    estimate = (raw_yes_count - params.forced_yes * n) / params.p
    return PopulationEstimate(raw_yes_count, n, estimate)

def estimate_counts(raw_yes_counts, n, params):
    """ estimate_population over a whole vector of per-attribute yes counts """
    _check_estimator(n, params)
    raw = np.asarray(raw_yes_counts, dtype=np.float64)
    if raw.size and (raw.min() < 0 or raw.max() > n):
        raise InvalidParameterError("Raw yes counts must be between 0 and the respondent count {}".format(n))
    return (raw - params.forced_yes * n) / params.p

def epsilon(params):
    """ ln((p + (1-p)q) / ((1-p)q)) """
    if params.no_plausible_deniability:
        raise InfiniteEpsilonError("infinite epsilon: (1-p)q is zero for p={} q={}".format(params.p, params.q))
    return math.log((params.p + params.forced_yes) / params.forced_yes)

def ldp_epsilon(params):
    """ the local differential privacy level taken over both answers, whichever ratio is larger:
    ln max(Pr[1|1]/Pr[1|0], Pr[0|0]/Pr[0|1]).  Equal to epsilon() whenever q <= 1/2 """
    yes1, yes0 = response_probabilities(params)
    no0, no1 = 1.0 - yes0, 1.0 - yes1
    if yes0 == 0 or no1 == 0:
        raise InfiniteEpsilonError("infinite epsilon: an answer is impossible under one truth for p={} q={}".format(
            params.p, params.q))
    return math.log(max(yes1 / yes0, no0 / no1))

def leakage(params, pi_a):
    """ how much one answer tells about a respondent drawn from a population where a fraction
    pi_a holds the attribute.  Degenerate params give epsilon=inf and the flag set """
    pi_a = checkProbability(pi_a, "pi_a")
    if not (0.0 < pi_a < 1.0):
        raise InvalidParameterError("pi_a must be strictly between 0 and 1, got {}".format(pi_a))
    p, q = params.p, params.q
    p_yes = p * pi_a + params.forced_yes
    if p_yes == 0:
        raise ZeroProbabilityError("P(Yes) is zero for p={} q={}: the posterior given yes is undefined".format(p, q))
    p_a_given_yes = pi_a * (p + params.forced_yes) / p_yes
    p_not_a_given_yes = (1.0 - pi_a) * params.forced_yes / p_yes
    p_no = p * (1.0 - pi_a) + (1.0 - p) * (1.0 - q)
    if p_no > 0:
        p_a_given_no = pi_a * (1.0 - p) * (1.0 - q) / p_no
        p_not_a_given_no = 1.0 - p_a_given_no
    else:
        p_a_given_no = p_not_a_given_no = None
    if params.no_plausible_deniability:
        eps = math.inf
    else:
        eps = epsilon(params)
    return LeakageReport(p_a_given_yes, p_not_a_given_yes, eps, pi_a, p_yes, p_no,
                         p_a_given_no, p_not_a_given_no, params.no_plausible_deniability, params)

def leakage_sweep(ps, qs, pi_a):
    """ leakage over the p x q grid.  Points that are invalid or give no plausible deniability
    are skipped """
    reports = []
    for p in ps:
        for q in qs:
            try:
                params = PrivacyParams(p, q)
            except InvalidParameterError as e:
                _log.warning("Skipping p={} q={}: {}".format(p, q, e))
                continue
            if params.no_plausible_deniability:
                _log.warning("Skipping p={} q={}: no plausible deniability".format(p, q))
                continue
            reports.append(leakage(params, pi_a))
    return reports

def rmse(estimates, actuals):
    """ root mean squared error over the paired entries """
    estimates = np.asarray(estimates, dtype=np.float64)
    actuals = np.asarray(actuals, dtype=np.float64)
    if estimates.shape != actuals.shape:
        raise ValidationError("rmse needs sequences of equal length, got {} and {}".format(
            estimates.size, actuals.size))
    if estimates.size == 0:
        raise ValidationError("rmse needs at least one pair")
    return float(np.sqrt(np.mean((estimates - actuals) ** 2)))

def relative_error(estimate, actual):
    """ |(actual - estimate) / actual| """
    return abs(signed_relative_error(estimate, actual))

def signed_relative_error(estimate, actual):
    """ (estimate - actual) / actual: negative when the estimate undershoots """
    if actual == 0:
        raise UndefinedRelativeError("Relative error is undefined for an actual count of 0")
    return (estimate - actual) / actual
