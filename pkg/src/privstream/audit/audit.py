#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Checking that an uploaded key set is a point function without opening it.

Every server holds one share E_i of a write.  The write is well formed when
V = E_0 ^ ... ^ E_{p-1} has exactly one nonzero row (or none at all, a dummy).
The servers find out how many rows of V are zero and nothing else, assuming
they follow the protocol (honest-but-curious):

  1. each party evaluates its share over all rows;
  2. every pair i < j shares a fresh seed drawn by i; party i masks its
     evaluation with the XOR of PRG(seed) over all its pairs, so every pad
     shows up exactly twice across the cluster;
  3. the parties are split into a left half [0, p/2) and a right half
     [p/2, p), and each half XORs its masked tables at its leader (the lowest
     index).  The pads cancel between the halves: left ^ right = V;
  4. V_r is zero iff left_r == right_r.  The leaders compare rows through
     salted digests blinded with X25519 scalars on both sides; the right
     leader shuffles both lists before handing them back, so the left leader
     only learns how many rows matched;
  5. the matches are counted;
  6. accept iff rows - 1 rows are zero.  A fully zero V is a dummy write:
     accepted and flagged, or rejected under the strict policy.

AuditParty is one server's side of that exchange.  audit_keyset drives all
parties in process; the aggregation server runs the same party code over the
wire.
"""
import struct
import logging
import threading
from collections import namedtuple

import numpy as np
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey

from privstream.dpf.dpf import eval_full, xor_accumulate
from privstream.dpf.prg import DEFAULT_PRG
from privstream.shared.common import random_bytes
from privstream.shared.errors import AuditError, AuditReplayError, MissingParticipantError
from privstream.shared.errors import GeometryError, ExcisionError, ValidationError, DecodeError

_log = logging.getLogger(__name__)

POINT_BYTES = 32

ACCEPT = 0
ACCEPT_DUMMY = 1
REJECT = 2
REJECT_DUMMY = 3

DUMMY_ACCEPT = 'accept'
DUMMY_STRICT = 'strict'

# stages of the networked exchange
STAGE_SEED = 1
STAGE_MASKED = 2
STAGE_BLIND_LEFT = 3
STAGE_BLIND_RIGHT = 4
STAGE_VERDICT = 5

VERDICT_HEADER = struct.Struct('<BI')

AuditVerdict = namedtuple('AuditVerdict', ['accepted', 'dummy', 'zero_rows', 'reason'])

AuditTranscript = namedtuple('AuditTranscript', ['owner_id', 'per_row_blinded', 'nxor_results', 'verdict'])

def audit_salt(epoch_id, owner_id):
    """ per (epoch, owner) salt both leaders derive on their own """
    h = hashes.Hash(hashes.SHA256())
    h.update(b'privstream-audit')
    h.update(struct.pack('<Q', epoch_id))
    h.update(bytes(owner_id))
    return h.finalize()

def left_group(parties):
    return list(range(parties // 2))

def right_group(parties):
    return list(range(parties // 2, parties))

def leader_of(index, parties):
    return 0 if index < parties // 2 else parties // 2

def _row_token(salt, row, value):
    h = hashes.Hash(hashes.SHA256())
    h.update(salt)
    h.update(struct.pack('<I', row))
    h.update(value)
    return h.finalize()

def _blind(scalar, u):
    try:
        return X25519PrivateKey.from_private_bytes(scalar).exchange(X25519PublicKey.from_public_bytes(u))
    except ValueError as e:
        raise AuditError("Blinding a row digest failed: {}".format(e))

def _split_points(data, rows):
    if len(data) != rows * POINT_BYTES:
        raise DecodeError("Expected {} blinded digests ({} bytes), got {} bytes".format(
            rows, rows * POINT_BYTES, len(data)))
    return [data[i * POINT_BYTES:(i + 1) * POINT_BYTES] for i in range(rows)]

def decide(zero_rows, rows, dummy_policy=DUMMY_ACCEPT):
    """ verdict for a combined table with zero_rows zero rows out of rows """
    if zero_rows == rows - 1:
        return AuditVerdict(True, False, zero_rows, "point function")
    if zero_rows == rows:
        if dummy_policy == DUMMY_STRICT:
            return AuditVerdict(False, True, zero_rows, "all rows zero (dummy write rejected under strict policy)")
        return AuditVerdict(True, True, zero_rows, "all rows zero (dummy write)")
    return AuditVerdict(False, False, zero_rows, "{} nonzero rows".format(rows - zero_rows))

def encode_verdict(verdict):
    if verdict.accepted:
        code = ACCEPT_DUMMY if verdict.dummy else ACCEPT
    else:
        code = REJECT_DUMMY if verdict.dummy else REJECT
    return VERDICT_HEADER.pack(code, verdict.zero_rows) + verdict.reason.encode('utf-8')

def decode_verdict(data):
    if len(data) < VERDICT_HEADER.size:
        raise DecodeError("Audit verdict of {} bytes is truncated".format(len(data)))
    code, zeroRows = VERDICT_HEADER.unpack_from(data)
    reason = data[VERDICT_HEADER.size:].decode('utf-8', errors='replace')
    if code == ACCEPT:
        return AuditVerdict(True, False, zeroRows, reason)
    if code == ACCEPT_DUMMY:
        return AuditVerdict(True, True, zeroRows, reason)
    if code in (REJECT, REJECT_DUMMY):
        return AuditVerdict(False, code == REJECT_DUMMY, zeroRows, reason)
    raise DecodeError("Unknown audit verdict code {}".format(code))

class AuditParty(object):
    """ one server's view of an audit.  All randomness (pairwise seeds, blinding scalar,
    shuffles) is drawn in the constructor, before the share is looked at """

    def __init__(self, index, parties, geometry, key, salt, rng=None, prg=DEFAULT_PRG):
        if parties < 2:
            raise ValidationError("An audit needs at least 2 parties, got {}".format(parties))
        if not 0 <= index < parties:
            raise ValidationError("party {} is outside [0, {})".format(index, parties))
        self.index = index
        self.parties = parties
        self.geometry = geometry
        self.salt = salt
        self.prg = prg
        self.rng = rng
        self.outgoing = {j: prg.random_seed(rng) for j in range(index + 1, parties)}
        self.scalar = random_bytes(rng, POINT_BYTES)
        if rng is None:
            rng = np.random.default_rng()
        self.shuffles = (rng.permutation(geometry.rows), rng.permutation(geometry.rows))

        if key.geometry != geometry:
            raise GeometryError("Share geometry {} does not match audit geometry {}".format(key.geometry, geometry))
        if key.party_index != index:
            raise ValidationError("Share for party {} handed to audit party {}".format(key.party_index, index))
        self.evaluation = eval_full(key)
        self.incoming = {}
        self.absorbed = set()
        self.group_value = None

    @property
    def leader(self):
        return leader_of(self.index, self.parties)

    @property
    def is_leader(self):
        return self.leader == self.index

    @property
    def is_left_leader(self):
        return self.index == 0

    @property
    def group(self):
        return left_group(self.parties) if self.index < self.parties // 2 else right_group(self.parties)

    def seeds_to_send(self):
        """ {party: seed} for every higher-indexed party """
        return dict(self.outgoing)

    def receive_seed(self, sender, seed):
        if not 0 <= sender < self.index:
            raise AuditError("Party {} cannot take a pairwise seed from party {}".format(self.index, sender))
        if len(seed) != self.prg.seed_bytes:
            raise DecodeError("Pairwise seed of {} bytes, expected {}".format(len(seed), self.prg.seed_bytes))
        self.incoming[sender] = bytes(seed)

    def masked_rows(self):
        """ evaluation ^ pad, where the pad mixes in every pairwise seed """
        missing = [j for j in range(self.index) if j not in self.incoming]
        if missing:
            raise MissingParticipantError("Party {} has no pairwise seed from parties {}".format(self.index, missing))
        masked = self.evaluation.copy()
        for seed in list(self.incoming.values()) + list(self.outgoing.values()):
            pad = np.frombuffer(self.prg.expand(seed, self.geometry.size), dtype=np.uint8)
            xor_accumulate(masked, pad.reshape(masked.shape), out=masked)
        return masked

    def absorb(self, sender, masked):
        """ leader only: XOR a group member's masked table into the group value """
        if not self.is_leader:
            raise AuditError("Party {} is not a group leader".format(self.index))
        if sender not in self.group or sender == self.index:
            raise AuditError("Party {} is not in the group of leader {}".format(sender, self.index))
        if sender in self.absorbed:
            raise AuditError("Masked rows from party {} absorbed twice".format(sender))
        if self.group_value is None:
            self.group_value = self.masked_rows()
        masked = self.geometry.as_table(masked)
        xor_accumulate(self.group_value, masked, out=self.group_value)
        self.absorbed.add(sender)

    def _groupValue(self):
        if not self.is_leader:
            raise AuditError("Party {} is not a group leader".format(self.index))
        missing = [j for j in self.group if j != self.index and j not in self.absorbed]
        if missing:
            raise MissingParticipantError("Leader {} is missing masked rows from parties {}".format(self.index, missing))
        if self.group_value is None:
            self.group_value = self.masked_rows()
        return self.group_value

    def _tokens(self):
        value = self._groupValue()
        return [_row_token(self.salt, r, value[r].tobytes()) for r in range(self.geometry.rows)]

    def blind_left(self):
        """ left leader: its row digests blinded with its scalar, in row order """
        if not self.is_left_leader:
            raise AuditError("Only party 0 blinds the left digests")
        return b''.join(_blind(self.scalar, t) for t in self._tokens())

    def blind_right(self, left_blinded):
        """ right leader: blind the left digests again and its own digests once, shuffling
        both lists independently """
        if self.index != self.parties // 2:
            raise AuditError("Only party {} answers for the right group".format(self.parties // 2))
        left = _split_points(left_blinded, self.geometry.rows)
        doubled = [_blind(self.scalar, a) for a in left]
        own = [_blind(self.scalar, t) for t in self._tokens()]
        first, second = self.shuffles
        return (b''.join(doubled[i] for i in first), b''.join(own[i] for i in second))

    def count_matches(self, doubled_left, blinded_right):
        """ left leader: finish blinding the right digests and count the rows whose
        values agreed.  Returns (blinded digests, nxor bits), both in shuffled order """
        if not self.is_left_leader:
            raise AuditError("Only party 0 counts matches")
        doubled = _split_points(doubled_left, self.geometry.rows)
        right = set(_blind(self.scalar, b) for b in _split_points(blinded_right, self.geometry.rows))
        nxor = [1 if d in right else 0 for d in doubled]
        return doubled, nxor

class AuditLog(object):
    """ which owners have been audited in which epoch """

    def __init__(self):
        self.lock = threading.Lock()
        self.audited = {}

    def record(self, epoch_id, owner_id):
        with self.lock:
            owners = self.audited.setdefault(epoch_id, set())
            if owner_id in owners:
                raise AuditReplayError("Owner {} was already audited in epoch {}".format(
                    bytes(owner_id[:8]).hex() if isinstance(owner_id, bytes) else owner_id, epoch_id))
            owners.add(owner_id)

    def seen(self, epoch_id, owner_id):
        with self.lock:
            return owner_id in self.audited.get(epoch_id, ())

    def forget_epoch(self, epoch_id):
        with self.lock:
            self.audited.pop(epoch_id, None)

def audit_keyset(keys, geometry, rngs=None, owner_id=b'', epoch_id=0, dummy_policy=DUMMY_ACCEPT,
                 audit_log=None, prg=DEFAULT_PRG):
    """ run the whole exchange in process.  keys[i] is the share held by server i (None
    when that server has nothing), rngs[i] that server's randomness """
    keys = list(keys)
    parties = len(keys)
    if parties < 2:
        raise MissingParticipantError("An audit needs at least 2 participants, got {}".format(parties))
    absent = [i for i, k in enumerate(keys) if k is None]
    if absent:
        raise MissingParticipantError("Servers {} hold no share for this owner".format(absent))
    for k in keys:
        if k.geometry != geometry:
            raise GeometryError("Share geometry {} does not match {}".format(k.geometry, geometry))
    if audit_log is not None:
        audit_log.record(epoch_id, owner_id)
    if rngs is None:
        rngs = [None] * parties

    salt = audit_salt(epoch_id, owner_id)
    party = [AuditParty(i, parties, geometry, keys[i], salt, rngs[i], prg) for i in range(parties)]

    # pairwise seeds
    for p in party:
        for j, seed in p.seeds_to_send().items():
            party[j].receive_seed(p.index, seed)
    # group XOR at the leaders
    for p in party:
        if not p.is_leader:
            party[p.leader].absorb(p.index, p.masked_rows())
    # blinded zero check between the two leaders
    left, right = party[0], party[parties // 2]
    doubled, blindedRight = right.blind_right(left.blind_left())
    perRow, nxor = left.count_matches(doubled, blindedRight)

    verdict = decide(sum(nxor), geometry.rows, dummy_policy)
    if not verdict.accepted:
        _log.info("Audit rejected owner {} in epoch {}: {}".format(bytes(owner_id[:8]).hex(), epoch_id, verdict.reason))
    elif verdict.dummy:
        _log.debug("Audit accepted a dummy write in epoch {}".format(epoch_id))
    return AuditTranscript(owner_id, perRow, nxor, verdict)

def excise(state, offending_key, owner_id=None):
    """ XOR a rejected share back out of an epoch accumulator.  The owner is looked up in the
    epoch's contributor log when not given, so a share can't be taken out twice """
    if owner_id is None:
        owner_id = state.owner_of(offending_key)
        if owner_id is None:
            raise ExcisionError("The offending share was never accumulated in epoch {}".format(state.epoch_id))
    return state.excise(owner_id)
