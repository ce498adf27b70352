#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Threaded aggregation server.

One AggregationServer per party.  Data owners send it WRITE_SHARE frames; at
the end of every epoch the servers swap contributor lists (so a share that
reached only some of them is dropped everywhere), audit the shares when running
lazily, swap intermediates and finalize.  Epochs follow the shared clock, or
EPOCH_CLOSE frames from a coordinator with manual_epochs.

Messages from peers never block the handler that receives them: they are posted
to a mailbox that the epoch and audit drivers wait on.

A client ABORT excises its share only while the epoch is open.  After the close
the contributor lists are what drop a write that did not reach every server, and
a finished epoch keeps nothing but its table.
"""
import os
import socket
import socketserver
import threading
import time
import logging

import numpy as np

from privstream.audit.audit import AuditParty, AuditLog, audit_salt, decide, encode_verdict, decode_verdict
from privstream.audit.audit import STAGE_SEED, STAGE_MASKED, STAGE_BLIND_LEFT, STAGE_BLIND_RIGHT, STAGE_VERDICT
from privstream.dpf.prg import DEFAULT_PRG
from privstream.epoch.epoch_state import EpochState, epoch_for_time, OPEN
from privstream.shared.common import bytes2humanN
from privstream.shared.errors import PrivstreamError, ProtocolError, DecodeError, FrameError, GeometryError
from privstream.shared.errors import EpochClosedError, DuplicateResponseError, SubmissionError
from privstream.shared.errors import PeerTimeoutError, ResultPendingError, ExcisionError
from privstream.transport.client import Connection
from privstream.transport.wire import Frame, read_frame, write_frame, ack, error_frame, error_code_for, decode_error
from privstream.transport.wire import QUERY_ANNOUNCE, WRITE_SHARE, EPOCH_CLOSE, INTERMEDIATE, RESULT
from privstream.transport.wire import AUDIT_MASKED_ROWS, AUDIT_ZEROCHECK, AUDIT_VERDICT, ERROR, ERR_ABORT
from privstream.transport.wire import encode_query, decode_query, decode_write_share
from privstream.transport.wire import encode_contributors, decode_contributors, encode_intermediate, decode_intermediate
from privstream.transport.wire import encode_audit, decode_audit

_log = logging.getLogger(__name__)

TICK_SECONDS = 0.05

class Mailbox(object):
    """ frames posted by peers, keyed by (kind, epoch, ...) """

    def __init__(self):
        self.cond = threading.Condition()
        self.items = {}

    def put(self, key, value):
        with self.cond:
            self.items[key] = value
            self.cond.notify_all()

    def take_all(self, keys, deadline):
        """ {key: value} once every key has arrived.  PeerTimeoutError names the
        senders (last element of each key) still missing at the deadline """
        keys = list(keys)
        with self.cond:
            while True:
                missing = [k for k in keys if k not in self.items]
                if not missing:
                    return {k: self.items.pop(k) for k in keys}
                remaining = deadline - time.time()
                if remaining <= 0:
                    raise PeerTimeoutError("Timed out waiting for {} from servers {}".format(
                        missing[0][0], sorted(k[-1] for k in missing)), [k[-1] for k in missing])
                self.cond.wait(remaining)

    def take(self, key, deadline):
        return self.take_all([key], deadline)[key]

    def drop_epoch(self, epoch_id):
        with self.cond:
            for key in [k for k in self.items if k[1] == epoch_id]:
                del self.items[key]

class PeerLink(object):
    """ persistent connection to one peer, reopened on failure and retried until
    the deadline (peers may still be starting up) """

    def __init__(self, endpoint, timeout):
        self.connection = Connection(endpoint, timeout)
        self.timeout = timeout
        self.lock = threading.Lock()

    def request(self, frame):
        deadline = time.time() + self.timeout
        with self.lock:
            while True:
                try:
                    return self.connection.request(frame)
                except (OSError, FrameError) as e:
                    self.connection.close()
                    if time.time() >= deadline:
                        raise PeerTimeoutError("Peer {}:{} unreachable: {}".format(
                            self.connection.endpoint[0], self.connection.endpoint[1], e))
                    time.sleep(TICK_SECONDS)

    def close(self):
        with self.lock:
            self.connection.close()

class AggregationRequestHandler(socketserver.BaseRequestHandler):
    """ one connection: read a frame, answer it, repeat until the peer hangs up """

    def handle(self):
        while True:
            try:
                frame = read_frame(self.request)
            except FrameError as e:
                _log.warning("Dropping connection from {}: {}".format(self.client_address, e))
                try:
                    write_frame(self.request, error_frame(error_code_for(e), 0, str(e)))
                except OSError:
                    pass
                return
            except OSError:
                return
            if frame is None:
                return
            try:
                write_frame(self.request, self.server.dispatch(frame))
            except OSError:
                return

class AggregationServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, config, query=None, prg=DEFAULT_PRG, clock=time.time, start_epoch=0):
        socketserver.TCPServer.__init__(self, config.listen, AggregationRequestHandler)
        self.config = config
        self.geometry = config.geometry
        self.prg = prg
        self.clock = clock
        self.query = query
        self.lock = threading.RLock()
        self.epochs = {}
        self.results = {}
        self.failed = {}
        self.current = start_epoch
        self.mailbox = Mailbox()
        self.auditLog = AuditLog()
        self.peers = {}
        self.stopping = threading.Event()
        self.threads = []
        self.handlers = {
            QUERY_ANNOUNCE: self._onQuery,
            WRITE_SHARE: self._onWriteShare,
            EPOCH_CLOSE: self._onEpochClose,
            INTERMEDIATE: self._onIntermediate,
            RESULT: self._onResult,
            AUDIT_MASKED_ROWS: self._onAudit,
            AUDIT_ZEROCHECK: self._onAudit,
            AUDIT_VERDICT: self._onAudit,
            ERROR: self._onError,
        }

    @property
    def server_id(self):
        return self.config.server_id

    @property
    def endpoint(self):
        return self.server_address[:2]

    @property
    def timeout(self):
        return self.config.peer_timeout_ms / 1000.0

    def start(self):
        self._spawn(self.serve_forever, "server{}".format(self.server_id))
        if not self.config.manual_epochs:
            self._spawn(self._tick, "server{}-ticker".format(self.server_id))
        _log.info("Server {} of {} listening on {}:{} ({} audit, {} epochs, {} tables)".format(
            self.server_id, self.config.parties, self.endpoint[0], self.endpoint[1], self.config.audit_mode,
            'manual' if self.config.manual_epochs else '{} ms'.format(self.config.epoch_duration_ms),
            bytes2humanN(self.config.geometry.size)))
        return self

    def stop(self):
        self.stopping.set()
        if self.threads:
            self.shutdown()
        self.server_close()
        for thread in self.threads:
            if thread is not threading.current_thread():
                thread.join(self.timeout)
        for link in self.peers.values():
            link.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, excType, excValue, traceback):
        self.stop()

    def _spawn(self, target, name, *args):
        thread = threading.Thread(target=target, name=name, args=args)
        thread.daemon = True
        thread.start()
        with self.lock:
            self.threads = [t for t in self.threads if t.is_alive()] + [thread]
        return thread

    def _peer(self, j):
        with self.lock:
            if j not in self.peers:
                self.peers[j] = PeerLink(self.config.servers[j], self.timeout)
            return self.peers[j]

    def _broadcast(self, frame):
        for j in self.config.peer_ids:
            self._peer(j).request(frame)

    def current_epoch(self):
        if self.config.manual_epochs:
            with self.lock:
                return self.current
        return epoch_for_time(self.clock() * 1000, self.config.epoch_duration_ms)

    def epoch(self, epoch_id):
        """ the state of an epoch, created on first use.  Finished epochs are dropped and
        never come back: their table is in results, or the reason in failed """
        with self.lock:
            state = self.epochs.get(epoch_id)
            if state is None:
                if self.finished(epoch_id):
                    raise EpochClosedError("Epoch {} is already finished at server {}".format(epoch_id, self.server_id),
                                           epoch_id=epoch_id)
                state = EpochState(epoch_id, self.geometry, self.server_id, self.config.parties)
                self.epochs[epoch_id] = state
            return state

    def finished(self, epoch_id):
        with self.lock:
            return epoch_id in self.results or epoch_id in self.failed

    def dispatch(self, frame):
        """ the reply to one request frame """
        try:
            return self.handlers[frame.msg_type](frame)
        except PrivstreamError as e:
            epochId = frame.epoch_id
            if isinstance(e, EpochClosedError) and e.current_epoch_id is not None:
                epochId = e.current_epoch_id
            _log.info("Server {} refused {}: {}".format(self.server_id, frame, e))
            return error_frame(error_code_for(e), epochId, str(e), frame_epoch=frame.epoch_id)
        except Exception as e:
            _log.exception("Server {} failed on {}".format(self.server_id, frame))
            return error_frame(error_code_for(e), frame.epoch_id, "internal error: {}".format(e))

    # request handlers

    def _onQuery(self, frame):
        if not frame.payload:
            with self.lock:
                if self.query is None:
                    raise ProtocolError("No query has been announced to server {}".format(self.server_id))
                return Frame(QUERY_ANNOUNCE, self.current_epoch(), encode_query(self.query))
        query = decode_query(frame.payload)
        if (query.rows, query.message_bytes) != (self.geometry.rows, self.geometry.message_bytes):
            raise GeometryError("Query {} asks for {} rows x {} bytes but server {} runs {}".format(
                query.query_id, query.rows, query.message_bytes, self.server_id, self.geometry))
        with self.lock:
            if self.query is not None and self.query.query_id == query.query_id and self.query != query:
                raise ProtocolError("Query {} was re-announced with a different body".format(query.query_id))
            self.query = query
        _log.info("Server {} now serving query {} ({} attributes)".format(self.server_id, query.query_id,
                                                                         query.attributes))
        return Frame(QUERY_ANNOUNCE, self.current_epoch(), b'')

    def _onWriteShare(self, frame):
        ownerId, key = decode_write_share(frame.payload, self.geometry.max_table_bytes)
        epochId = frame.epoch_id
        current = self.current_epoch()
        if epochId != current:
            raise EpochClosedError("Epoch {} is not open at server {}, the current epoch is {}".format(
                epochId, self.server_id, current), epoch_id=epochId, current_epoch_id=current)
        try:
            state = self.epoch(epochId)
            if self.config.audit_mode == 'eager':
                if state.has_written(ownerId):
                    raise DuplicateResponseError("duplicate response: owner {} already wrote in epoch {}".format(
                        ownerId[:8].hex(), epochId))
                verdict = self.run_audit(epochId, ownerId, key)
                if not verdict.accepted:
                    raise SubmissionError("Audit rejected the share of owner {}: {}".format(
                        ownerId[:8].hex(), verdict.reason))
            state.submit_share(ownerId, key)
        except EpochClosedError as e:
            raise EpochClosedError(str(e), epoch_id=epochId, current_epoch_id=self.current_epoch())
        return ack(frame)

    def _onEpochClose(self, frame):
        epochId = frame.epoch_id
        if frame.payload:
            sender, owners = decode_contributors(frame.payload)
            # a server with no writes of its own still has to take part
            try:
                self.epoch(epochId)
            except EpochClosedError:
                return ack(frame)
            self.mailbox.put(('contributors', epochId, sender), owners)
            return ack(frame)
        if not self.config.manual_epochs:
            raise ProtocolError("Server {} follows the clock, it does not take EPOCH_CLOSE".format(self.server_id))
        with self.lock:
            if epochId > self.current:
                raise ProtocolError("Epoch {} is not open yet, the current epoch is {}".format(epochId, self.current))
            if epochId < self.current:
                return ack(frame)
            self.current = epochId + 1
        self.finish_epoch_async(epochId)
        return ack(frame)

    def _onIntermediate(self, frame):
        sender, table = decode_intermediate(frame.payload)
        if len(table) != self.geometry.size:
            raise GeometryError("Intermediate from server {} is {} bytes, expected {}".format(
                sender, len(table), self.geometry.size))
        if not self.finished(frame.epoch_id):
            self.mailbox.put(('intermediate', frame.epoch_id, sender), table)
        return ack(frame)

    def _onResult(self, frame):
        with self.lock:
            if frame.epoch_id in self.results:
                return Frame(RESULT, frame.epoch_id, self.results[frame.epoch_id].to_bytes())
            if frame.epoch_id in self.failed:
                raise PeerTimeoutError("Epoch {} was aborted: {}".format(frame.epoch_id, self.failed[frame.epoch_id]))
        raise ResultPendingError("Epoch {} is not finalized at server {}".format(frame.epoch_id, self.server_id))

    def _onAudit(self, frame):
        ownerId, sender, stage, body = decode_audit(frame.payload)
        if not self.finished(frame.epoch_id):
            self.mailbox.put(('audit', frame.epoch_id, ownerId, stage, sender), body)
        return ack(frame)

    def _onError(self, frame):
        code, epochId, message = decode_error(frame.payload)
        if code != ERR_ABORT:
            _log.warning("Server {} got an ERROR frame: {}".format(self.server_id, message))
            return ack(frame)
        try:
            ownerId = bytes.fromhex(message)
        except ValueError:
            raise DecodeError("Abort does not carry a hex owner id: {!r}".format(message[:80]))
        with self.lock:
            state = self.epochs.get(epochId)
        if state is None:
            if self.finished(epochId):
                raise EpochClosedError("Epoch {} is already finished, the share of owner {} stays".format(
                    epochId, ownerId[:8].hex()), epoch_id=epochId)
            return ack(frame)
        try:
            state.withdraw(ownerId)
        except ExcisionError as e:
            _log.debug("Nothing to excise for the abort: {}".format(e))
        return ack(frame)

    # epoch close

    def _tick(self):
        while not self.stopping.wait(TICK_SECONDS):
            current = self.current_epoch()
            with self.lock:
                due = sorted(e for e, s in self.epochs.items() if e < current and s.status == OPEN)
            for epochId in due:
                self.finish_epoch_async(epochId)

    def finish_epoch_async(self, epoch_id):
        try:
            state = self.epoch(epoch_id)
            state.close_epoch()
        except EpochClosedError:
            return None
        return self._spawn(self._finishEpoch, "server{}-epoch{}".format(self.server_id, epoch_id), state)

    def _finishEpoch(self, state):
        epochId = state.epoch_id
        mine = state.contributor_ids()
        _log.info("Server {} closed epoch {} with {} contributors".format(self.server_id, epochId, len(mine)))
        try:
            result = self._combine(state, mine)
        except Exception as e:
            if not isinstance(e, PrivstreamError):
                _log.exception("Server {} failed to finish epoch {}".format(self.server_id, epochId))
            state.abort(str(e))
            with self.lock:
                self.failed[epochId] = str(e)
            return
        finally:
            self.auditLog.forget_epoch(epochId)
            self.mailbox.drop_epoch(epochId)
            with self.lock:
                self.epochs.pop(epochId, None)

        if self.config.out_dir is not None:
            try:
                result.save(os.path.join(self.config.out_dir, "server{}".format(self.server_id),
                                         "epoch_{}.pswt".format(epochId)))
            except OSError as e:
                _log.error("Server {} could not save epoch {}: {}".format(self.server_id, epochId, e))
        _log.info("Server {} finalized epoch {}: {} nonzero rows".format(self.server_id, epochId,
                                                                        len(result.nonzero_rows)))

    def _combine(self, state, mine):
        """ drop the shares that did not reach every server, audit lazily, then swap
        intermediates and finalize.  The result is published before the epoch is dropped """
        epochId = state.epoch_id
        self._broadcast(Frame(EPOCH_CLOSE, epochId, encode_contributors(self.server_id, mine)))
        lists = self.mailbox.take_all([('contributors', epochId, j) for j in self.config.peer_ids],
                                      time.time() + self.timeout)
        common = set(mine)
        for owners in lists.values():
            common &= set(owners)
        for ownerId in sorted(mine - common):
            if state.key_of(ownerId) is None:
                continue
            _log.info("Server {} drops owner {}: its share did not reach every server".format(
                self.server_id, ownerId[:8].hex()))
            state.excise(ownerId)
        if self.config.audit_mode == 'lazy':
            for ownerId in sorted(common):
                key = state.key_of(ownerId)
                if key is None:
                    continue
                verdict = self.run_audit(epochId, ownerId, key)
                if not verdict.accepted:
                    state.excise(ownerId)

        self._broadcast(Frame(INTERMEDIATE, epochId, encode_intermediate(self.server_id,
                                                                         state.intermediate().tobytes())))
        peers = self.mailbox.take_all([('intermediate', epochId, j) for j in self.config.peer_ids],
                                      time.time() + self.timeout)
        result = state.finalize({key[2]: np.frombuffer(table, dtype=np.uint8) for key, table in peers.items()})
        with self.lock:
            self.results[epochId] = result
        return result

    # audit

    def run_audit(self, epoch_id, owner_id, key):
        """ this server's part in the audit of one owner's keyset """
        party = AuditParty(self.server_id, self.config.parties, self.geometry, key, audit_salt(epoch_id, owner_id),
                           None, self.prg)
        self.auditLog.record(epoch_id, owner_id)
        deadline = time.time() + self.timeout
        sid = self.server_id
        right = self.config.parties // 2

        def send(j, msgType, stage, body):
            self._peer(j).request(Frame(msgType, epoch_id, encode_audit(owner_id, sid, stage, body)))

        def take(stage, sender):
            return self.mailbox.take(('audit', epoch_id, owner_id, stage, sender), deadline)

        for j, seed in party.seeds_to_send().items():
            send(j, AUDIT_MASKED_ROWS, STAGE_SEED, seed)
        for j in range(sid):
            party.receive_seed(j, take(STAGE_SEED, j))
        if not party.is_leader:
            send(party.leader, AUDIT_MASKED_ROWS, STAGE_MASKED, party.masked_rows().tobytes())
        else:
            for j in party.group:
                if j != sid:
                    party.absorb(j, take(STAGE_MASKED, j))

        if party.is_left_leader:
            send(right, AUDIT_ZEROCHECK, STAGE_BLIND_LEFT, party.blind_left())
            body = take(STAGE_BLIND_RIGHT, right)
            half = len(body) // 2
            perRow, nxor = party.count_matches(body[:half], body[half:])
            verdict = decide(sum(nxor), self.geometry.rows, self.config.dummy_policy)
            for j in self.config.peer_ids:
                send(j, AUDIT_VERDICT, STAGE_VERDICT, encode_verdict(verdict))
        else:
            if sid == right:
                doubled, own = party.blind_right(take(STAGE_BLIND_LEFT, 0))
                send(0, AUDIT_ZEROCHECK, STAGE_BLIND_RIGHT, doubled + own)
            verdict = decode_verdict(take(STAGE_VERDICT, 0))

        if not verdict.accepted:
            _log.info("Server {} audit rejected owner {} in epoch {}: {}".format(sid, owner_id[:8].hex(), epoch_id,
                                                                                verdict.reason))
        return verdict

def free_endpoints(count, host='127.0.0.1'):
    """ `count` localhost endpoints whose ports were free a moment ago """
    sockets = []
    try:
        for i in range(count):
            s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            s.bind((host, 0))
            sockets.append(s)
        return [s.getsockname()[:2] for s in sockets]
    finally:
        for s in sockets:
            s.close()
