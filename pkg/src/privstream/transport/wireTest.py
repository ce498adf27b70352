import unittest
import struct

import numpy as np
from hypothesis import given, settings, strategies as st

from privstream.dpf.dpf import TableGeometry, keygen, eval_full
from privstream.shared import errors
from privstream.shared.errors import FrameError, DecodeError, InvalidParameterError, GeometryError
from privstream.transport.wire import Frame, encode_frame, decode_frame, read_frame, FRAME_HEADER, MAX_PAYLOAD
from privstream.transport.wire import EPOCH_CLOSE, WRITE_SHARE, RESULT, ERROR, MSG_NAMES
from privstream.transport.wire import QueryAnnounce, encode_query, decode_query
from privstream.transport.wire import encode_write_share, decode_write_share
from privstream.transport.wire import encode_contributors, decode_contributors, encode_intermediate, decode_intermediate
from privstream.transport.wire import encode_audit, decode_audit, owner_fingerprint
from privstream.transport.wire import error_frame, decode_error, error_code_for, exception_for_error
from privstream.transport.wire import ERR_EPOCH_CLOSED, ERR_DUPLICATE

class FakeSocket(object):
    """ recv() over a fixed buffer, in small uneven chunks """
    def __init__(self, data, chunk=5):
        self.data = data
        self.chunk = chunk

    def recv(self, n):
        out, self.data = self.data[:min(n, self.chunk)], self.data[min(n, self.chunk):]
        return out

class TestCase(unittest.TestCase):
    def setUp(self):
        self.query = QueryAnnounce(12, ['station-{}'.format(i) for i in range(10)], 64, 4, 0.995, 0.999, 2000, b'sig')
        unittest.TestCase.setUp(self)

    def testHeaderOnlyFrame(self):
        data = encode_frame(Frame(EPOCH_CLOSE, 7))
        self.assertEqual(len(data), 13)
        self.assertEqual(data.hex(), '03' + '0700000000000000' + '00000000')
        self.assertEqual(decode_frame(data), Frame(EPOCH_CLOSE, 7, b''))

    @given(msgType=st.sampled_from(sorted(MSG_NAMES)), epoch=st.integers(min_value=0, max_value=2**64 - 1),
           payload=st.binary(max_size=300))
    @settings(deadline=None)
    def testRoundTrip(self, msgType, epoch, payload):
        frame = Frame(msgType, epoch, payload)
        self.assertEqual(decode_frame(encode_frame(frame)), frame)

    def testLyingLength(self):
        data = bytearray(encode_frame(Frame(RESULT, 1, b'abcdef')))
        struct.pack_into('<I', data, 9, 9)
        with self.assertRaises(FrameError):
            decode_frame(bytes(data))
        with self.assertRaises(FrameError):
            read_frame(FakeSocket(bytes(data)))
        with self.assertRaises(FrameError):
            decode_frame(encode_frame(Frame(RESULT, 1, b'abcdef'))[:-1])

    def testRejectsUnknownAndOversize(self):
        with self.assertRaises(FrameError):
            encode_frame(Frame(9, 0, b''))
        with self.assertRaises(FrameError):
            decode_frame(FRAME_HEADER.pack(11, 0, 0))
        with self.assertRaises(FrameError):
            decode_frame(FRAME_HEADER.pack(RESULT, 0, MAX_PAYLOAD + 1))
        with self.assertRaises(FrameError):
            decode_frame(b'\x03\x00')

    def testReadFrameStream(self):
        frames = [Frame(WRITE_SHARE, 3, b'x' * 40), Frame(EPOCH_CLOSE, 4), Frame(RESULT, 5, b'yz')]
        sock = FakeSocket(b''.join(encode_frame(f) for f in frames))
        self.assertEqual([read_frame(sock) for f in frames], frames)
        self.assertIsNone(read_frame(sock))

    def testQueryCodec(self):
        self.assertEqual(decode_query(encode_query(self.query)), self.query)
        unicodeLabels = self.query._replace(attribute_labels=('Ålesund', 'süd'))
        self.assertEqual(decode_query(encode_query(unicodeLabels)), unicodeLabels)
        with self.assertRaises(DecodeError):
            decode_query(encode_query(self.query)[:-1])
        with self.assertRaises(DecodeError):
            decode_query(encode_query(self.query) + b'\x00')

    def testQueryValidation(self):
        with self.assertRaises(InvalidParameterError):
            self.query._replace(attribute_labels=tuple(str(i) for i in range(65))).validate()
        with self.assertRaises(InvalidParameterError):
            self.query._replace(p=1.5).validate()
        with self.assertRaises(GeometryError):
            self.query._replace(message_bytes=1).validate()
        self.assertEqual(self.query.attributes, 10)

    def testWriteShare(self):
        geom = TableGeometry(16, 3)
        key = keygen(geom, 4, b'abc', 2, np.random.default_rng(1))[0]
        ownerId = owner_fingerprint(b'certificate')
        payload = encode_write_share(ownerId, key)
        self.assertEqual(payload[:32], ownerId)
        decodedOwner, decodedKey = decode_write_share(payload)
        self.assertEqual(decodedOwner, ownerId)
        self.assertTrue(np.array_equal(eval_full(decodedKey), eval_full(key)))
        with self.assertRaises(DecodeError):
            encode_write_share(b'short', key)
        with self.assertRaises(DecodeError):
            decode_write_share(payload[:20])

    def testPeerPayloads(self):
        owners = [owner_fingerprint(bytes([i])) for i in range(4)]
        sender, decoded = decode_contributors(encode_contributors(3, owners))
        self.assertEqual(sender, 3)
        self.assertEqual(decoded, sorted(owners))
        self.assertEqual(decode_contributors(encode_contributors(0, [])), (0, []))
        with self.assertRaises(DecodeError):
            decode_contributors(encode_contributors(1, owners)[:-3])
        self.assertEqual(decode_intermediate(encode_intermediate(2, b'\x00\x01')), (2, b'\x00\x01'))
        self.assertEqual(decode_audit(encode_audit(owners[0], 1, 4, b'body')), (owners[0], 1, 4, b'body'))

    def testErrorMapping(self):
        closed = errors.EpochClosedError("closed", epoch_id=3, current_epoch_id=4)
        self.assertEqual(error_code_for(closed), ERR_EPOCH_CLOSED)
        frame = error_frame(ERR_EPOCH_CLOSED, 4, "Epoch 3 is not open", frame_epoch=3)
        self.assertEqual(frame.msg_type, ERROR)
        self.assertEqual(frame.epoch_id, 3)
        self.assertEqual(decode_error(frame.payload), (ERR_EPOCH_CLOSED, 4, "Epoch 3 is not open"))
        exc = exception_for_error(frame.payload)
        self.assertIsInstance(exc, errors.EpochClosedError)
        self.assertEqual(exc.current_epoch_id, 4)
        self.assertEqual(error_code_for(errors.AuditReplayError("again")), ERR_DUPLICATE)
        for exc in [errors.DuplicateResponseError("d"), errors.GeometryError("g"), errors.ResultPendingError("r"),
                    errors.PeerTimeoutError("t"), errors.SubmissionAbortedError("a"), errors.ProtocolError("p")]:
            back = exception_for_error(error_frame(error_code_for(exc), 0, str(exc)).payload)
            self.assertIs(type(back), type(exc))

if __name__ == '__main__':
    unittest.main()
