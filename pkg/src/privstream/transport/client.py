#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Data owner side of the protocol, plus the small request helpers the
harness and the servers use to talk to an aggregation server.
"""
import socket
import threading
import time
import logging
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from privstream.dpf.dpf import TableGeometry, keygen
from privstream.dpf.prg import DEFAULT_PRG
from privstream.epoch.epoch_state import SubmitAck, epoch_for_time
from privstream.epoch.slots import pick_slot
from privstream.epoch.write_table import WriteTable, encode_response
from privstream.rr.randomized_response import PrivacyParams, randomize_vector
from privstream.shared.common import make_rng, random_bytes
from privstream.shared.errors import PrivstreamError, ValidationError, ProtocolError, FrameError
from privstream.shared.errors import DuplicateResponseError, EpochClosedError, SubmissionAbortedError
from privstream.shared.errors import ResultPendingError
from privstream.transport.wire import Frame, read_frame, write_frame, exception_for_error, error_frame
from privstream.transport.wire import QUERY_ANNOUNCE, WRITE_SHARE, EPOCH_CLOSE, RESULT, ERROR, ERR_ABORT
from privstream.transport.wire import encode_query, decode_query, encode_write_share, owner_fingerprint

_log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0

SubmitResult = namedtuple('SubmitResult', ['epoch_id', 'owner_id', 'target_row', 'message', 'privatized', 'acks'])

class Connection(object):
    """ one TCP connection carrying request/reply frames.  An ERROR reply with a
    payload is raised as the matching exception """

    def __init__(self, endpoint, timeout=DEFAULT_TIMEOUT):
        self.endpoint = tuple(endpoint)
        self.timeout = timeout
        self.sock = None

    def open(self):
        if self.sock is None:
            self.sock = socket.create_connection(self.endpoint, timeout=self.timeout)
        return self

    def close(self):
        if self.sock is not None:
            try:
                self.sock.close()
            finally:
                self.sock = None

    def request(self, frame):
        self.open()
        write_frame(self.sock, frame)
        reply = read_frame(self.sock)
        if reply is None:
            raise FrameError("{}:{} closed the connection without replying to {}".format(
                self.endpoint[0], self.endpoint[1], frame.name))
        if reply.msg_type == ERROR and reply.payload:
            raise exception_for_error(reply.payload)
        if reply.msg_type != frame.msg_type:
            raise ProtocolError("Expected a {} reply, got {}".format(frame.name, reply.name))
        return reply

    def __enter__(self):
        return self.open()

    def __exit__(self, excType, excValue, traceback):
        self.close()

def request(endpoint, frame, timeout=DEFAULT_TIMEOUT):
    """ one request on a fresh connection """
    with Connection(endpoint, timeout) as connection:
        return connection.request(frame)

def parse_endpoints(text):
    """ "host:port,host:port" -> [(host, port), ...] """
    endpoints = []
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        host, sep, port = item.rpartition(':')
        if not sep or not host:
            raise ValidationError("Endpoint {} is not of the form host:port".format(item))
        try:
            port = int(port)
        except ValueError:
            raise ValidationError("Endpoint {} has a non-numeric port".format(item))
        if not 0 < port < 65536:
            raise ValidationError("Endpoint {} has port {} out of range".format(item, port))
        endpoints.append((host, port))
    if not endpoints:
        raise ValidationError("No endpoints in {!r}".format(text))
    return endpoints

class QueryRegistry(object):
    """ what this data owner has seen and answered.  A query id answers at most once
    per epoch, and a re-announced id must carry the same body """

    def __init__(self):
        self.lock = threading.Lock()
        self.queries = {}
        self.answered = set()

    def register(self, query):
        with self.lock:
            known = self.queries.get(query.query_id)
            if known is not None and known != query:
                raise ProtocolError("Query {} was re-announced with a different body".format(query.query_id))
            self.queries[query.query_id] = query

    def claim(self, query_id, epoch_id):
        with self.lock:
            if (query_id, epoch_id) in self.answered:
                raise DuplicateResponseError("Query {} was already answered in epoch {}".format(query_id, epoch_id))
            self.answered.add((query_id, epoch_id))

    def release(self, query_id, epoch_id):
        with self.lock:
            self.answered.discard((query_id, epoch_id))

def announce_query(servers, query, timeout=DEFAULT_TIMEOUT):
    payload = encode_query(query)
    for endpoint in servers:
        request(endpoint, Frame(QUERY_ANNOUNCE, 0, payload), timeout)

def fetch_query(endpoint, timeout=DEFAULT_TIMEOUT):
    """ (query, current epoch) as known to one server """
    reply = request(endpoint, Frame(QUERY_ANNOUNCE, 0, b''), timeout)
    return decode_query(reply.payload), reply.epoch_id

def send_close(servers, epoch_id, timeout=DEFAULT_TIMEOUT):
    """ coordinator: close epoch_id on every server (manual epochs only) """
    for endpoint in servers:
        request(endpoint, Frame(EPOCH_CLOSE, epoch_id, b''), timeout)

def fetch_result(endpoint, epoch_id, geometry, timeout=DEFAULT_TIMEOUT, wait=0.0):
    """ finalized table of an epoch, polling up to `wait` seconds while it is pending """
    deadline = time.time() + wait
    while True:
        try:
            reply = request(endpoint, Frame(RESULT, epoch_id, b''), timeout)
            return WriteTable(epoch_id, geometry, reply.payload)
        except ResultPendingError:
            if time.time() >= deadline:
                raise
            time.sleep(0.05)

def _sendShare(endpoint, epoch_id, owner_id, key, timeout):
    request(endpoint, Frame(WRITE_SHARE, epoch_id, encode_write_share(owner_id, key)), timeout)

def _abort(servers, acked, owner_id, epoch_id, timeout):
    for j in acked:
        try:
            request(servers[j], error_frame(ERR_ABORT, epoch_id, owner_id.hex()), timeout)
        except (PrivstreamError, OSError) as e:
            _log.warning("Could not abort the share at server {}: {}".format(j, e))

def _submitWrite(geometry, message, servers, rng, owner_id, epoch_id, timeout, prg, max_retries, registry=None,
                 query_id=None):
    """ send one write as a keyset, one share per server, all in flight at once.  If any
    server refuses, the servers that accepted are told to excise the share.  A refusal
    because the epoch moved on is retried once in the new epoch """
    for attempt in range(max_retries + 1):
        row = pick_slot(geometry.rows, rng)
        keys = keygen(geometry, row, message, len(servers), rng, prg)
        if registry is not None:
            registry.claim(query_id, epoch_id)
        acks, failures = {}, {}
        with ThreadPoolExecutor(max_workers=len(servers)) as pool:
            futures = {j: pool.submit(_sendShare, servers[j], epoch_id, owner_id, keys[j], timeout)
                       for j in range(len(servers))}
            for j, future in futures.items():
                try:
                    future.result()
                    acks[j] = SubmitAck(epoch_id, owner_id, j)
                except (PrivstreamError, OSError) as e:
                    failures[j] = e
        if not failures:
            return epoch_id, row, [acks[j] for j in sorted(acks)]

        _abort(servers, sorted(acks), owner_id, epoch_id, timeout)
        if registry is not None:
            registry.release(query_id, epoch_id)
        moved = [f.current_epoch_id for f in failures.values()
                 if isinstance(f, EpochClosedError) and f.current_epoch_id is not None]
        if attempt < max_retries and moved and max(moved) != epoch_id:
            _log.info("Epoch {} closed under the submission, retrying in epoch {}".format(epoch_id, max(moved)))
            epoch_id = max(moved)
            continue
        raise SubmissionAbortedError("Submission to epoch {} aborted: {}".format(
            epoch_id, "; ".join("server {}: {}".format(j, failures[j]) for j in sorted(failures))))

def client_submit(query, truth_bits, servers, rng=None, owner_id=None, epoch_id=None, registry=None,
                  timeout=DEFAULT_TIMEOUT, max_retries=1, prg=DEFAULT_PRG):
    """ privatize truth_bits under the query's coins and write them anonymously.  Only the
    privatized vector ever leaves this function """
    query.validate()
    servers = [tuple(s) for s in servers]
    if len(servers) < 2:
        raise ValidationError("A submission needs at least 2 servers, got {}".format(len(servers)))
    truth = np.asarray(truth_bits)
    if truth.ndim != 1 or truth.size != query.attributes:
        raise ValidationError("Query {} has {} attributes but {} truth bits were given".format(
            query.query_id, query.attributes, truth.size))
    # unseeded runs take slots, owner ids and key seeds from the OS
    rng = make_rng(rng) if rng is not None else None
    if owner_id is None:
        owner_id = owner_fingerprint(random_bytes(rng, 32))
    if epoch_id is None:
        epoch_id = epoch_for_time(time.time() * 1000, query.epoch_ms)
    if registry is not None:
        registry.register(query)

    geometry = TableGeometry(query.rows, query.message_bytes)
    privatized = randomize_vector(truth, PrivacyParams(query.p, query.q), rng if rng is not None else make_rng())
    message = encode_response(privatized, geometry.message_bytes)
    epoch_id, row, acks = _submitWrite(geometry, message, servers, rng, owner_id, epoch_id, timeout, prg,
                                       max_retries, registry, query.query_id)
    return SubmitResult(epoch_id, owner_id, row, message, privatized, acks)

def submit_dummy(query, servers, rng=None, owner_id=None, epoch_id=None, timeout=DEFAULT_TIMEOUT, prg=DEFAULT_PRG):
    """ an all-zero write, sent by owners who have nothing to report this epoch """
    rng = make_rng(rng) if rng is not None else None
    servers = [tuple(s) for s in servers]
    if owner_id is None:
        owner_id = owner_fingerprint(random_bytes(rng, 32))
    if epoch_id is None:
        epoch_id = epoch_for_time(time.time() * 1000, query.epoch_ms)
    geometry = TableGeometry(query.rows, query.message_bytes)
    message = bytes(geometry.message_bytes)
    epoch_id, row, acks = _submitWrite(geometry, message, servers, rng, owner_id, epoch_id, timeout, prg, 1)
    return SubmitResult(epoch_id, owner_id, row, message, None, acks)
