#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" End-to-end epochs: simulated data owners write through either an
in-process aggregator or live servers on localhost.  Every client draws from
its own (seed, index) stream in the same order on both paths, so for a given
seed both backends see the very same keysets.
"""
import logging
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from privstream.audit.audit import audit_keyset
from privstream.dpf.dpf import TableGeometry, keygen
from privstream.epoch.epoch_state import EpochState, ServerConfig
from privstream.epoch.slots import pick_slot
from privstream.epoch.write_table import encode_response, decoded_responses, response_bytes
from privstream.rr.randomized_response import PrivacyParams, randomize_vector
from privstream.shared.common import make_rng
from privstream.shared.errors import InvalidParameterError, SubmissionError
from privstream.transport.client import client_submit, send_close, fetch_result
from privstream.transport.server import AggregationServer, free_endpoints
from privstream.transport.wire import QueryAnnounce, owner_fingerprint

_log = logging.getLogger(__name__)

INPROCESS = 'inprocess'
LIVE = 'live'
BACKENDS = (INPROCESS, LIVE)

E2EResult = namedtuple('E2EResult', ['tables', 'decoded', 'rejected', 'geometry'])

def _client(seed, index, attributes):
    """ (rng, owner id, truth) of one simulated data owner: one true bit, its station """
    rng = make_rng((seed, index))
    truth = np.zeros(attributes, dtype=np.int64)
    truth[int(rng.integers(0, attributes))] = 1
    return rng, owner_fingerprint('{}-{}'.format(seed, index).encode()), truth

def _inprocess(query, geometry, clients, parties, seed, audit_mode):
    params = PrivacyParams(query.p, query.q)
    states = [EpochState(0, geometry, j, parties) for j in range(parties)]
    rejected = 0
    for i in range(clients):
        rng, ownerId, truth = _client(seed, i, query.attributes)
        message = encode_response(randomize_vector(truth, params, rng), geometry.message_bytes)
        keys = list(keygen(geometry, pick_slot(geometry.rows, rng), message, parties, rng))
        if audit_mode != 'off' and not audit_keyset(keys, geometry, owner_id=ownerId).verdict.accepted:
            rejected += 1
            continue
        for state, key in zip(states, keys):
            state.submit_share(ownerId, key)
    for state in states:
        state.close_epoch()
    intermediates = [state.intermediate() for state in states]
    return [state.finalize([t for j, t in enumerate(intermediates) if j != state.server_id]) for state in states], \
        rejected

def _live(query, geometry, clients, parties, seed, audit_mode, workers, timeout_ms):
    endpoints = free_endpoints(parties)
    servers = [AggregationServer(ServerConfig(j, endpoints, geometry, query.epoch_ms, timeout_ms, audit_mode,
                                              manual_epochs=True), query=query) for j in range(parties)]
    for server in servers:
        server.start()
    try:
        def submit(i):
            rng, ownerId, truth = _client(seed, i, query.attributes)
            try:
                client_submit(query, truth, endpoints, rng, ownerId, epoch_id=0, max_retries=0)
                return True
            except SubmissionError as e:
                _log.info("Client {} was refused: {}".format(i, e))
                return False
        with ThreadPoolExecutor(max_workers=workers) as pool:
            accepted = list(pool.map(submit, range(clients)))
        send_close(endpoints, 0)
        tables = [fetch_result(e, 0, geometry, wait=timeout_ms / 1000.0 * 4) for e in endpoints]
    finally:
        for server in servers:
            server.stop()
    return tables, accepted.count(False)

def run_e2e(clients, rows, parties, params, seed, backend=INPROCESS, attributes=8, message_bytes=None,
            audit_mode='off', workers=8, timeout_ms=5000):
    """ one epoch of `clients` writes; returns every server's finalized table and the
    decoded multiset of privatized answers """
    if backend not in BACKENDS:
        raise InvalidParameterError("Unknown backend {}, expected one of {}".format(backend, ', '.join(BACKENDS)))
    if clients < 0:
        raise InvalidParameterError("Client count must be nonnegative, got {}".format(clients))
    params = PrivacyParams(*params)
    if message_bytes is None:
        message_bytes = response_bytes(attributes) + 1
    geometry = TableGeometry(rows, message_bytes)
    query = QueryAnnounce(seed & 0xFFFFFFFF, ['station-{}'.format(i) for i in range(attributes)], rows,
                          message_bytes, params.p, params.q, 1000).validate()
    if backend == INPROCESS:
        tables, rejected = _inprocess(query, geometry, clients, parties, seed, audit_mode)
    else:
        tables, rejected = _live(query, geometry, clients, parties, seed, audit_mode, workers, timeout_ms)
    decoded = decoded_responses(tables[0], attributes)
    _log.info("{} epoch: {} clients, {} decoded answers, {} refused".format(backend, clients, len(decoded), rejected))
    return E2EResult(tables, decoded, rejected, geometry)
