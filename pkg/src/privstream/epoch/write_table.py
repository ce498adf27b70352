#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" The finalized write table, and how a privatized answer vector is laid out in
one of its cells.

A vector of a attributes is packed little-endian bitwise into ceil(a/8) bytes.
When the cell has a spare byte its last byte is set to 0x01, so a respondent who
answered all zeros still shows up; without it an all-zero answer looks exactly
like a dummy write.  Two real writes landing in the same row XOR their markers
away, which is how collisions are spotted.
"""
import os
import struct
import logging
from collections import namedtuple

import numpy as np

from privstream.dpf.dpf import TableGeometry, nonzero_rows
from privstream.rr.randomized_response import PrivatizedVector
from privstream.shared.errors import GeometryError, DecodeError

_log = logging.getLogger(__name__)

PRESENCE_MARKER = 0x01

TABLE_MAGIC = b'PSWT'
TABLE_HEADER = struct.Struct('<4sQIH')

WriteTally = namedtuple('WriteTally', ['raw_yes_counts', 'respondents', 'undecodable_rows'])

class WriteTable(object):
    """ the reconstructed table of one epoch, read-only """

    def __init__(self, epoch_id, geometry, table):
        self.epoch_id = epoch_id
        self.geometry = geometry
        self.table = geometry.as_table(table).copy()
        self.table.flags.writeable = False

    @property
    def rows(self):
        return [self.table[r].tobytes() for r in range(self.geometry.rows)]

    @property
    def nonzero_rows(self):
        return nonzero_rows(self.table)

    def to_bytes(self):
        return self.table.tobytes()

    def save(self, path):
        dirName = os.path.dirname(path)
        if dirName and not os.path.isdir(dirName):
            os.makedirs(dirName)
        with open(path, 'wb') as outFile:
            outFile.write(TABLE_HEADER.pack(TABLE_MAGIC, self.epoch_id, self.geometry.rows, self.geometry.message_bytes))
            outFile.write(self.to_bytes())

    @staticmethod
    def load(path):
        with open(path, 'rb') as inFile:
            data = inFile.read()
        if len(data) < TABLE_HEADER.size:
            raise DecodeError("{} is too short to be a write table".format(path))
        magic, epochId, rows, messageBytes = TABLE_HEADER.unpack_from(data)
        if magic != TABLE_MAGIC:
            raise DecodeError("{} is not a write table".format(path))
        geometry = TableGeometry(rows, messageBytes)
        body = data[TABLE_HEADER.size:]
        if len(body) != geometry.size:
            raise DecodeError("{} holds {} table bytes, expected {}".format(path, len(body), geometry.size))
        return WriteTable(epochId, geometry, body)

    def __eq__(self, other):
        if not isinstance(other, WriteTable):
            return NotImplemented
        return (self.epoch_id == other.epoch_id and self.geometry == other.geometry and
                np.array_equal(self.table, other.table))

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    def __repr__(self):
        return "WriteTable(epoch={}, {}, {} nonzero rows)".format(self.epoch_id, self.geometry, len(self.nonzero_rows))

def response_bytes(attributes):
    return (attributes + 7) // 8

def encode_response(vector, message_bytes):
    """ cell contents for a privatized vector """
    vector = PrivatizedVector(vector)
    needed = response_bytes(vector.attribute_count)
    if needed > message_bytes:
        raise GeometryError("{} attributes need {} bytes but cells are only {} bytes".format(
            vector.attribute_count, needed, message_bytes))
    cell = np.zeros(message_bytes, dtype=np.uint8)
    cell[:needed] = np.packbits(vector.as_array(), bitorder='little')
    if message_bytes > needed:
        cell[-1] = PRESENCE_MARKER
    elif vector.popcount() == 0:
        _log.debug("All-zero answer in a cell without a spare byte is indistinguishable from a dummy write")
    return cell.tobytes()

def decode_response(cell, attributes):
    """ PrivatizedVector for a cell, None for an empty (dummy or unused) cell.  Raises
    DecodeError for cells no single write could have produced """
    cell = np.frombuffer(bytes(cell), dtype=np.uint8)
    needed = response_bytes(attributes)
    if needed > cell.size:
        raise GeometryError("{} attributes need {} bytes but cells are only {} bytes".format(
            attributes, needed, cell.size))
    if not cell.any():
        return None
    if cell.size > needed:
        if cell[-1] != PRESENCE_MARKER:
            raise DecodeError("cell has no presence marker")
        if cell[needed:-1].any():
            raise DecodeError("cell has bytes set between the answer and the marker")
    bits = np.unpackbits(cell[:needed], bitorder='little')
    if bits[attributes:].any():
        raise DecodeError("cell has padding bits set past attribute {}".format(attributes))
    return PrivatizedVector(bits[:attributes])

def tally_write_table(table, attributes):
    """ per attribute yes counts, respondent count and undecodable rows of a finalized table.
    table is a WriteTable or a (rows, message_bytes) array """
    if isinstance(table, WriteTable):
        table = table.table
    raw = np.zeros(attributes, dtype=np.int64)
    respondents = 0
    undecodable = 0
    for row, cell in nonzero_rows(table):
        try:
            vector = decode_response(cell, attributes)
        except DecodeError as e:
            _log.debug("Row {} is undecodable (collision?): {}".format(row, e))
            undecodable += 1
            continue
        if vector is not None:
            raw += vector.as_array()
            respondents += 1
    return WriteTally(raw, respondents, undecodable)

def decoded_responses(table, attributes):
    """ sorted list of the bit tuples decoded from a table, skipping undecodable rows """
    if isinstance(table, WriteTable):
        table = table.table
    out = []
    for row, cell in nonzero_rows(table):
        try:
            vector = decode_response(cell, attributes)
        except DecodeError:
            continue
        if vector is not None:
            out.append(vector.bits)
    return sorted(out)
