#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Per-server epoch accumulator.

An epoch goes OPEN -> CLOSED -> FINALIZED.  While open it XORs every accepted
share evaluation into the accumulator, one share per data owner.  Closing takes
the snapshot that gets broadcast to the peers, and finalizing XORs in every
peer's snapshot to give the write table (which is the same on every honest
server).  All state changes happen under one lock, so a close can never
interleave with a submission.
"""
import threading
import logging
from collections import namedtuple

import numpy as np

from privstream.dpf.dpf import eval_full, xor_accumulate
from privstream.epoch.write_table import WriteTable
from privstream.shared.errors import ValidationError, GeometryError, ProtocolError
from privstream.shared.errors import DuplicateResponseError, EpochClosedError, PeerTimeoutError, ExcisionError

_log = logging.getLogger(__name__)

OPEN = 'open'
CLOSED = 'closed'
FINALIZED = 'finalized'

MIN_EPOCH_MS = 100

SubmitAck = namedtuple('SubmitAck', ['epoch_id', 'owner_id', 'server_id'])

def epoch_for_time(now_ms, epoch_ms):
    """ the shared clock rule: epoch id = floor(now / epoch length) """
    if epoch_ms <= 0:
        raise ValidationError("Epoch length must be positive, got {}".format(epoch_ms))
    return int(now_ms) // int(epoch_ms)

class ServerConfig(object):
    """ what one aggregation server needs to know about itself and the cluster.
    servers lists every server's (host, port) in server id order, own entry included """

    def __init__(self, server_id, servers, geometry, epoch_duration_ms, peer_timeout_ms=5000,
                 audit_mode='eager', dummy_policy='accept', manual_epochs=False, listen=None, out_dir=None):
        self.servers = [tuple(s) for s in servers]
        if len(self.servers) < 2:
            raise ValidationError("An aggregation cluster needs at least 2 servers, got {}".format(len(self.servers)))
        if not 0 <= server_id < len(self.servers):
            raise ValidationError("server id {} is outside [0, {})".format(server_id, len(self.servers)))
        if epoch_duration_ms < MIN_EPOCH_MS:
            raise ValidationError("Epoch duration must be at least {} ms, got {}".format(MIN_EPOCH_MS, epoch_duration_ms))
        self.server_id = server_id
        self.geometry = geometry
        self.epoch_duration_ms = epoch_duration_ms
        self.peer_timeout_ms = peer_timeout_ms
        self.audit_mode = audit_mode
        self.dummy_policy = dummy_policy
        self.manual_epochs = manual_epochs
        self.listen = tuple(listen) if listen is not None else self.servers[server_id]
        self.out_dir = out_dir

    @property
    def parties(self):
        return len(self.servers)

    @property
    def peer_ids(self):
        return [i for i in range(self.parties) if i != self.server_id]

class EpochState(object):
    """ parties fixes how many intermediates finalize takes (parties - 1); an epoch
    built without it can take shares but not be finalized """

    def __init__(self, epoch_id, geometry, server_id=None, parties=None):
        if parties is not None and parties < 2:
            raise ValidationError("An epoch needs at least 2 parties, got {}".format(parties))
        self.epoch_id = epoch_id
        self.geometry = geometry
        self.server_id = server_id
        self.parties = parties
        self.accumulator = geometry.zero_table()
        self.status = OPEN
        # owner id -> key, kept so a share can be XORed back out until the epoch is finished
        self.contributors = {}
        # every owner whose share was accepted, kept after the keys are released
        self.owners = set()
        self.excised = set()
        self.result = None
        self.error = None
        self.lock = threading.RLock()

    def _checkStatus(self, expected, action, errorClass=ProtocolError):
        if self.status != expected:
            raise errorClass("Cannot {} epoch {}: it is {}".format(action, self.epoch_id, self.status))

    def submit_share(self, owner_id, key):
        """ XOR one data owner's share into the accumulator """
        if key.geometry != self.geometry:
            raise GeometryError("Share geometry {} does not match the epoch's {}".format(key.geometry, self.geometry))
        if self.server_id is not None and key.party_index != self.server_id:
            raise ValidationError("Share is for party {} but this is server {}".format(key.party_index, self.server_id))
        evaluation = eval_full(key)
        with self.lock:
            if self.status != OPEN:
                raise EpochClosedError("Epoch {} is {}, no more submissions".format(self.epoch_id, self.status),
                                       epoch_id=self.epoch_id)
            if self.has_written(owner_id):
                raise DuplicateResponseError("duplicate response: owner {} already wrote in epoch {}".format(
                    _ownerStr(owner_id), self.epoch_id))
            xor_accumulate(self.accumulator, evaluation, out=self.accumulator)
            self.contributors[owner_id] = key
            self.owners.add(owner_id)
        return SubmitAck(self.epoch_id, owner_id, self.server_id)

    def has_written(self, owner_id):
        """ whether owner_id has a share in this epoch, accepted or excised """
        with self.lock:
            return owner_id in self.owners or owner_id in self.excised

    def excise(self, owner_id):
        """ XOR an accepted share back out.  Each share can only be taken out once """
        with self.lock:
            if self.status == FINALIZED:
                raise ExcisionError("Epoch {} is finalized, shares can no longer be excised".format(self.epoch_id))
            if owner_id in self.excised:
                raise ExcisionError("Share of owner {} was already excised from epoch {}".format(
                    _ownerStr(owner_id), self.epoch_id))
            if owner_id not in self.contributors:
                raise ExcisionError("Owner {} never contributed to epoch {}".format(_ownerStr(owner_id), self.epoch_id))
            key = self.contributors.pop(owner_id)
            xor_accumulate(self.accumulator, eval_full(key), out=self.accumulator)
            self.owners.discard(owner_id)
            self.excised.add(owner_id)
            _log.info("Excised owner {} from epoch {}".format(_ownerStr(owner_id), self.epoch_id))
            return self.accumulator.copy()

    def withdraw(self, owner_id):
        """ excise on the owner's own request.  Only allowed while the epoch is open: once
        it is closed the contributor lists decide which partial writes are dropped """
        with self.lock:
            if self.status != OPEN:
                raise EpochClosedError("Epoch {} is {}, owner {} can no longer withdraw".format(
                    self.epoch_id, self.status, _ownerStr(owner_id)), epoch_id=self.epoch_id)
            return self.excise(owner_id)

    def key_of(self, owner_id):
        """ the logged share of owner_id, or None once excised or released """
        with self.lock:
            return self.contributors.get(owner_id)

    def contributor_ids(self):
        with self.lock:
            return set(self.contributors)

    def owner_of(self, key):
        """ the owner id whose logged share equals key, or None """
        with self.lock:
            for owner_id, logged in self.contributors.items():
                if logged is key or logged == key:
                    return owner_id
        return None

    def close_epoch(self):
        """ stop accepting shares and return the intermediate result for the peers """
        with self.lock:
            self._checkStatus(OPEN, 'close', EpochClosedError)
            self.status = CLOSED
            _log.debug("Closed epoch {} with {} contributors".format(self.epoch_id, len(self.contributors)))
            return self.accumulator.copy()

    def intermediate(self):
        """ current intermediate of a closed epoch (differs from the close snapshot after excisions) """
        with self.lock:
            self._checkStatus(CLOSED, 'read the intermediate of')
            return self.accumulator.copy()

    def finalize(self, peer_intermediates):
        """ XOR in the intermediate of every other party, exactly parties - 1 of them.
        peer_intermediates is a list, or a dict keyed by server id (so absent servers can be named) """
        with self.lock:
            self._checkStatus(CLOSED, 'finalize')
            if self.parties is None:
                raise ProtocolError("Epoch {} does not know how many parties there are, it cannot be finalized".format(
                    self.epoch_id))
            if isinstance(peer_intermediates, dict):
                tables = list(peer_intermediates.values())
                missing = set(range(self.parties)) - set(peer_intermediates) - {self.server_id}
                if missing:
                    self.abort("missing intermediates from servers {}".format(sorted(missing)))
                    raise PeerTimeoutError("Epoch {}: no intermediate from servers {}".format(
                        self.epoch_id, sorted(missing)), sorted(missing))
            else:
                tables = list(peer_intermediates)
            if len(tables) != self.parties - 1:
                self.abort("expected {} peer intermediates, got {}".format(self.parties - 1, len(tables)))
                raise PeerTimeoutError("Epoch {}: expected {} peer intermediates, got {}".format(
                    self.epoch_id, self.parties - 1, len(tables)))
            tables = [np.asarray(peer, dtype=np.uint8) for peer in tables]
            for peer in tables:
                if peer.size != self.geometry.size:
                    self.abort("peer intermediate of {} bytes".format(peer.size))
                    raise ProtocolError("Epoch {}: peer intermediate is {} bytes, expected {}".format(
                        self.epoch_id, peer.size, self.geometry.size))
            table = self.accumulator
            for peer in tables:
                xor_accumulate(table, peer.reshape(table.shape), out=table)
            self.status = FINALIZED
            self.result = WriteTable(self.epoch_id, self.geometry, table)
            self._release()
            return self.result

    def abort(self, reason):
        """ finish the epoch without a table rather than publish a partial XOR """
        with self.lock:
            if self.status == FINALIZED:
                return
            self.status = FINALIZED
            self.error = reason
            self._release()
            _log.warning("Epoch {} aborted: {}".format(self.epoch_id, reason))

    def _release(self):
        # keys and the accumulator are table sized; only the owner ids outlive the epoch
        self.contributors.clear()
        self.accumulator = None

def _ownerStr(owner_id):
    if isinstance(owner_id, (bytes, bytearray)):
        return bytes(owner_id[:8]).hex()
    return str(owner_id)
