#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Frames and payloads exchanged between data owners, aggregation servers and
the harness.

Every frame is

    msg_type u8 | epoch_id u64 | payload_len u32 | payload

little-endian throughout, payloads capped at 128 MiB.  Each request gets exactly
one reply frame: the same type with the answer (often an empty ack), or ERROR.
"""
import struct
from collections import namedtuple

from cryptography.hazmat.primitives import hashes

from privstream.dpf.dpf import serialize_key, deserialize_key, DEFAULT_MAX_TABLE_BYTES
from privstream.epoch.write_table import response_bytes
from privstream.shared.common import checkProbability
from privstream.shared import errors
from privstream.shared.errors import FrameError, DecodeError, InvalidParameterError, GeometryError

QUERY_ANNOUNCE = 1
WRITE_SHARE = 2
EPOCH_CLOSE = 3
INTERMEDIATE = 4
RESULT = 5
AUDIT_MASKED_ROWS = 6
AUDIT_ZEROCHECK = 7
AUDIT_VERDICT = 8
ERROR = 15

MSG_NAMES = {
    QUERY_ANNOUNCE: 'QUERY_ANNOUNCE',
    WRITE_SHARE: 'WRITE_SHARE',
    EPOCH_CLOSE: 'EPOCH_CLOSE',
    INTERMEDIATE: 'INTERMEDIATE',
    RESULT: 'RESULT',
    AUDIT_MASKED_ROWS: 'AUDIT_MASKED_ROWS',
    AUDIT_ZEROCHECK: 'AUDIT_ZEROCHECK',
    AUDIT_VERDICT: 'AUDIT_VERDICT',
    ERROR: 'ERROR',
}

FRAME_HEADER = struct.Struct('<BQI')
MAX_PAYLOAD = 128 * 1024 * 1024

OWNER_ID_BYTES = 32

# ERROR frame codes
ERR_VALIDATION = 1
ERR_DUPLICATE = 2
ERR_EPOCH_CLOSED = 3
ERR_GEOMETRY = 4
ERR_PROTOCOL = 5
ERR_ABORT = 6
ERR_PEER_TIMEOUT = 7
ERR_AUDIT_REJECTED = 8
ERR_NOT_READY = 9
ERR_INTERNAL = 10

ERROR_HEADER = struct.Struct('<BQ')
QUERY_HEADER = struct.Struct('<QIHddI')
AUDIT_HEADER = struct.Struct('<32sBB')

class Frame(namedtuple('Frame', ['msg_type', 'epoch_id', 'payload'])):
    __slots__ = ()

    def __new__(cls, msg_type, epoch_id=0, payload=b''):
        return super(Frame, cls).__new__(cls, msg_type, epoch_id, bytes(payload))

    @property
    def payload_len(self):
        return len(self.payload)

    @property
    def name(self):
        return MSG_NAMES.get(self.msg_type, str(self.msg_type))

    def __repr__(self):
        return "Frame({}, epoch={}, {} bytes)".format(self.name, self.epoch_id, len(self.payload))

def encode_frame(frame):
    if frame.msg_type not in MSG_NAMES:
        raise FrameError("Unknown message type {}".format(frame.msg_type))
    if len(frame.payload) > MAX_PAYLOAD:
        raise FrameError("Payload of {} bytes exceeds the {} byte cap".format(len(frame.payload), MAX_PAYLOAD))
    if not 0 <= frame.epoch_id < 2**64:
        raise FrameError("Epoch id {} does not fit in 64 bits".format(frame.epoch_id))
    return FRAME_HEADER.pack(frame.msg_type, frame.epoch_id, len(frame.payload)) + frame.payload

def decode_header(header):
    """ (msg_type, epoch_id, payload_len) of a 13 byte header, validated """
    if len(header) < FRAME_HEADER.size:
        raise FrameError("Truncated frame header: {} of {} bytes".format(len(header), FRAME_HEADER.size))
    msgType, epochId, length = FRAME_HEADER.unpack_from(header)
    if msgType not in MSG_NAMES:
        raise FrameError("Unknown message type {}".format(msgType))
    if length > MAX_PAYLOAD:
        raise FrameError("Payload length {} exceeds the {} byte cap".format(length, MAX_PAYLOAD))
    return msgType, epochId, length

def decode_frame(data):
    """ exactly one frame from a buffer """
    data = bytes(data)
    msgType, epochId, length = decode_header(data)
    if len(data) != FRAME_HEADER.size + length:
        raise FrameError("Frame declares {} payload bytes but carries {}".format(length, len(data) - FRAME_HEADER.size))
    return Frame(msgType, epochId, data[FRAME_HEADER.size:])

def _recv_exact(sock, n):
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b''.join(chunks)

def read_frame(sock):
    """ next frame from a socket, None on a clean end of stream """
    header = _recv_exact(sock, FRAME_HEADER.size)
    if not header:
        return None
    msgType, epochId, length = decode_header(header)
    payload = _recv_exact(sock, length)
    if len(payload) != length:
        raise FrameError("Stream ended after {} of {} payload bytes".format(len(payload), length))
    return Frame(msgType, epochId, payload)

def write_frame(sock, frame):
    sock.sendall(encode_frame(frame))

def ack(frame):
    return Frame(frame.msg_type, frame.epoch_id, b'')

def owner_fingerprint(certificate):
    """ 32 byte owner id for a (stub) certificate """
    h = hashes.Hash(hashes.SHA256())
    h.update(bytes(certificate))
    return h.finalize()

def _checkOwner(owner_id):
    if len(owner_id) != OWNER_ID_BYTES:
        raise DecodeError("Owner ids are {} bytes, got {}".format(OWNER_ID_BYTES, len(owner_id)))
    return bytes(owner_id)

# ERROR

def error_frame(code, epoch_id, message, frame_epoch=None):
    payload = ERROR_HEADER.pack(code, epoch_id or 0) + str(message).encode('utf-8')
    return Frame(ERROR, epoch_id if frame_epoch is None else frame_epoch, payload)

def decode_error(payload):
    if len(payload) < ERROR_HEADER.size:
        raise DecodeError("ERROR payload of {} bytes is truncated".format(len(payload)))
    code, epochId = ERROR_HEADER.unpack_from(payload)
    return code, epochId, payload[ERROR_HEADER.size:].decode('utf-8', errors='replace')

def error_code_for(exc):
    """ ERROR code for an exception raised while serving a request """
    if isinstance(exc, errors.DuplicateResponseError) or isinstance(exc, errors.AuditReplayError):
        return ERR_DUPLICATE
    if isinstance(exc, errors.EpochClosedError):
        return ERR_EPOCH_CLOSED
    if isinstance(exc, errors.SubmissionAbortedError):
        return ERR_ABORT
    if isinstance(exc, errors.GeometryError):
        return ERR_GEOMETRY
    if isinstance(exc, errors.ValidationError):
        return ERR_VALIDATION
    if isinstance(exc, errors.ResultPendingError):
        return ERR_NOT_READY
    if isinstance(exc, errors.PeerTimeoutError):
        return ERR_PEER_TIMEOUT
    if isinstance(exc, errors.SubmissionError):
        return ERR_AUDIT_REJECTED
    if isinstance(exc, errors.ProtocolError):
        return ERR_PROTOCOL
    return ERR_INTERNAL

def exception_for_error(payload):
    """ the exception a client raises for an ERROR reply """
    code, epochId, message = decode_error(payload)
    if code == ERR_DUPLICATE:
        return errors.DuplicateResponseError(message)
    if code == ERR_EPOCH_CLOSED:
        return errors.EpochClosedError(message, current_epoch_id=epochId)
    if code == ERR_ABORT:
        return errors.SubmissionAbortedError(message)
    if code == ERR_GEOMETRY:
        return errors.GeometryError(message)
    if code == ERR_VALIDATION:
        return errors.ValidationError(message)
    if code == ERR_NOT_READY:
        return errors.ResultPendingError(message)
    if code == ERR_PEER_TIMEOUT:
        return errors.PeerTimeoutError(message)
    if code == ERR_AUDIT_REJECTED:
        return errors.SubmissionError(message)
    if code == ERR_PROTOCOL:
        return errors.ProtocolError(message)
    return errors.PrivstreamError(message)

# QUERY_ANNOUNCE

class QueryAnnounce(namedtuple('QueryAnnounce', ['query_id', 'attribute_labels', 'rows', 'message_bytes',
                                                 'p', 'q', 'epoch_ms', 'analyst_signature'])):
    """ a long-standing query.  The signature is carried but never checked """
    __slots__ = ()

    def __new__(cls, query_id, attribute_labels, rows, message_bytes, p, q, epoch_ms, analyst_signature=b''):
        return super(QueryAnnounce, cls).__new__(cls, query_id, tuple(attribute_labels), rows, message_bytes,
                                                 p, q, epoch_ms, bytes(analyst_signature))

    @property
    def attributes(self):
        return len(self.attribute_labels)

    def validate(self):
        if self.attributes < 1:
            raise InvalidParameterError("A query needs at least one attribute")
        if self.attributes > self.rows:
            raise InvalidParameterError("Query has {} labels but only {} rows".format(self.attributes, self.rows))
        checkProbability(self.p, "p")
        checkProbability(self.q, "q")
        if response_bytes(self.attributes) > self.message_bytes:
            raise GeometryError("{} attributes need message_bytes >= {}, got {}".format(
                self.attributes, response_bytes(self.attributes), self.message_bytes))
        return self

def encode_query(query):
    query.validate()
    parts = [QUERY_HEADER.pack(query.query_id, query.rows, query.message_bytes, query.p, query.q, query.epoch_ms),
             struct.pack('<I', query.attributes)]
    for label in query.attribute_labels:
        raw = label.encode('utf-8')
        if len(raw) > 0xFFFF:
            raise InvalidParameterError("Label {}... is too long".format(label[:20]))
        parts.append(struct.pack('<H', len(raw)) + raw)
    parts.append(struct.pack('<I', len(query.analyst_signature)) + query.analyst_signature)
    return b''.join(parts)

def decode_query(payload):
    payload = bytes(payload)
    try:
        queryId, rows, messageBytes, p, q, epochMs = QUERY_HEADER.unpack_from(payload)
        offset = QUERY_HEADER.size
        (count,) = struct.unpack_from('<I', payload, offset)
        offset += 4
        labels = []
        for i in range(count):
            (n,) = struct.unpack_from('<H', payload, offset)
            offset += 2
            if offset + n > len(payload):
                raise DecodeError("label {} runs past the payload".format(i))
            labels.append(payload[offset:offset + n].decode('utf-8'))
            offset += n
        (sigLen,) = struct.unpack_from('<I', payload, offset)
        offset += 4
        signature = payload[offset:offset + sigLen]
        if len(signature) != sigLen or offset + sigLen != len(payload):
            raise DecodeError("signature length does not match the payload")
    except (struct.error, UnicodeDecodeError) as e:
        raise DecodeError("Malformed QUERY_ANNOUNCE payload: {}".format(e))
    return QueryAnnounce(queryId, labels, rows, messageBytes, p, q, epochMs, signature).validate()

# WRITE_SHARE

def encode_write_share(owner_id, key):
    return _checkOwner(owner_id) + serialize_key(key)

def decode_write_share(payload, max_table_bytes=DEFAULT_MAX_TABLE_BYTES):
    if len(payload) < OWNER_ID_BYTES:
        raise DecodeError("WRITE_SHARE payload of {} bytes has no owner id".format(len(payload)))
    return bytes(payload[:OWNER_ID_BYTES]), deserialize_key(payload[OWNER_ID_BYTES:], max_table_bytes)

# EPOCH_CLOSE between servers: the contributor list

def encode_contributors(sender, owner_ids):
    owner_ids = sorted(owner_ids)
    return struct.pack('<BI', sender, len(owner_ids)) + b''.join(_checkOwner(o) for o in owner_ids)

def decode_contributors(payload):
    if len(payload) < 5:
        raise DecodeError("Contributor list of {} bytes is truncated".format(len(payload)))
    sender, count = struct.unpack_from('<BI', payload)
    body = payload[5:]
    if len(body) != count * OWNER_ID_BYTES:
        raise DecodeError("Contributor list declares {} owners but carries {} bytes".format(count, len(body)))
    return sender, [bytes(body[i * OWNER_ID_BYTES:(i + 1) * OWNER_ID_BYTES]) for i in range(count)]

# INTERMEDIATE

def encode_intermediate(sender, table):
    return struct.pack('<B', sender) + bytes(table)

def decode_intermediate(payload):
    if len(payload) < 1:
        raise DecodeError("Empty INTERMEDIATE payload")
    return payload[0], bytes(payload[1:])

# AUDIT_*

def encode_audit(owner_id, sender, stage, body):
    return AUDIT_HEADER.pack(_checkOwner(owner_id), sender, stage) + bytes(body)

def decode_audit(payload):
    if len(payload) < AUDIT_HEADER.size:
        raise DecodeError("Audit payload of {} bytes is truncated".format(len(payload)))
    ownerId, sender, stage = AUDIT_HEADER.unpack_from(payload)
    return ownerId, sender, stage, bytes(payload[AUDIT_HEADER.size:])
