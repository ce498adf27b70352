#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" XOR distributed point functions over a full table.

A write of `message` into `target_row` of an R x m table is split into p keys.
Keys 0..p-2 are PRG expansions of fresh seeds, key p-1 is the XOR of those
expansions with the point table (message at target_row, zeros elsewhere).  XOR
of every party's evaluation gives back the point table, any p-1 of them look
uniformly random.

Tables are numpy uint8 arrays of shape (rows, message_bytes).  On the wire every
key is sent expanded to full length so the correction key can't be told apart
from the PRG ones; the seeded form only saves memory on the generating side.
"""
import struct

import numpy as np

from privstream.dpf.prg import DEFAULT_PRG
from privstream.shared.errors import GeometryError, ValidationError, DecodeError

DEFAULT_MAX_TABLE_BYTES = 64 * 1024 * 1024

EXPANDED = 0
SEEDED = 1

KEY_HEADER = struct.Struct('<BIHB')

class TableGeometry(object):
    """ rows x message_bytes.  Rows need not be a power of two.  max_table_bytes
    is a guard, it doesn't take part in equality """

    def __init__(self, rows, message_bytes, max_table_bytes=DEFAULT_MAX_TABLE_BYTES):
        if isinstance(rows, bool) or not isinstance(rows, (int, np.integer)) or rows < 2:
            raise GeometryError("A write table needs at least 2 rows, got {}".format(rows))
        if isinstance(message_bytes, bool) or not isinstance(message_bytes, (int, np.integer)) or message_bytes < 1:
            raise GeometryError("message_bytes must be at least 1, got {}".format(message_bytes))
        if rows * message_bytes > max_table_bytes:
            raise GeometryError("Table of {} rows x {} bytes exceeds the cap of {} bytes".format(
                rows, message_bytes, max_table_bytes))
        self.rows = int(rows)
        self.message_bytes = int(message_bytes)
        self.max_table_bytes = max_table_bytes

    @property
    def size(self):
        return self.rows * self.message_bytes

    def zero_table(self):
        return np.zeros((self.rows, self.message_bytes), dtype=np.uint8)

    def as_table(self, data):
        """ view bytes / arrays of this geometry as a (rows, message_bytes) uint8 table """
        if isinstance(data, (bytes, bytearray, memoryview)):
            data = np.frombuffer(data, dtype=np.uint8)
        table = np.asarray(data, dtype=np.uint8)
        if table.size != self.size:
            raise GeometryError("Table of {} bytes does not match geometry {} ({} bytes)".format(
                table.size, self, self.size))
        return table.reshape((self.rows, self.message_bytes))

    def __eq__(self, other):
        if not isinstance(other, TableGeometry):
            return NotImplemented
        return self.rows == other.rows and self.message_bytes == other.message_bytes

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    def __hash__(self):
        return hash((self.rows, self.message_bytes))

    def __repr__(self):
        return "TableGeometry(rows={}, message_bytes={})".format(self.rows, self.message_bytes)

class DpfKey(object):
    """ one party's share.  material is the full expansion (EXPANDED) or a PRG seed (SEEDED) """

    def __init__(self, geometry, party_index, material, variant=EXPANDED, prg=DEFAULT_PRG):
        if not 0 <= party_index < 256:
            raise ValidationError("party_index must fit in a byte, got {}".format(party_index))
        material = bytes(material)
        if variant == EXPANDED:
            if len(material) != geometry.size:
                raise GeometryError("Expanded key material is {} bytes, geometry {} needs {}".format(
                    len(material), geometry, geometry.size))
        elif variant == SEEDED:
            if len(material) != prg.seed_bytes:
                raise GeometryError("Seeded key material is {} bytes, the PRG needs {}".format(
                    len(material), prg.seed_bytes))
        else:
            raise ValidationError("Unknown key variant {}".format(variant))
        self.geometry = geometry
        self.party_index = party_index
        self.material = material
        self.variant = variant
        self.prg = prg

    def expanded(self):
        """ the same key in EXPANDED form """
        if self.variant == EXPANDED:
            return self
        return DpfKey(self.geometry, self.party_index, eval_full(self).tobytes(), EXPANDED, self.prg)

    def __eq__(self, other):
        if not isinstance(other, DpfKey):
            return NotImplemented
        return (self.geometry == other.geometry and self.party_index == other.party_index and
                np.array_equal(eval_full(self), eval_full(other)))

    def __hash__(self):
        return hash((self.geometry, self.party_index))

    def __repr__(self):
        return "DpfKey(party={}, {}, {})".format(self.party_index, self.geometry,
                                                 "expanded" if self.variant == EXPANDED else "seeded")

class DpfKeySet(object):
    """ all p keys of one write.  target_row and message stay with the generator """

    def __init__(self, keys, target_row, message):
        self.keys = list(keys)
        self.target_row = target_row
        self.message = bytes(message)

    @property
    def geometry(self):
        return self.keys[0].geometry

    @property
    def parties(self):
        return len(self.keys)

    def __len__(self):
        return len(self.keys)

    def __getitem__(self, i):
        return self.keys[i]

    def __iter__(self):
        return iter(self.keys)

def point_table(geometry, target_row, message):
    """ the plain table a write is supposed to produce """
    if not 0 <= target_row < geometry.rows:
        raise ValidationError("target_row {} is outside [0, {})".format(target_row, geometry.rows))
    if len(message) != geometry.message_bytes:
        raise ValidationError("message is {} bytes, geometry {} needs {}".format(
            len(message), geometry, geometry.message_bytes))
    table = geometry.zero_table()
    table[target_row] = np.frombuffer(bytes(message), dtype=np.uint8)
    return table

def keygen(geometry, target_row, message, parties, rng=None, prg=DEFAULT_PRG):
    """ split write(target_row, message) into `parties` keys.

    The p-1 PRG seeds are drawn before target_row or message are looked at, so
    with a seeded rng the first p-1 keys depend only on the rng state.
    """
    if parties < 2:
        raise ValidationError("A DPF needs at least 2 parties, got {}".format(parties))
    if parties > 256:
        raise ValidationError("At most 256 parties fit the key header, got {}".format(parties))
    seeds = [prg.random_seed(rng) for i in range(parties - 1)]
    keys = [DpfKey(geometry, i, seed, SEEDED, prg) for i, seed in enumerate(seeds)]

    correction = point_table(geometry, target_row, message)
    for key in keys:
        xor_accumulate(correction, eval_full(key), out=correction)
    keys.append(DpfKey(geometry, parties - 1, correction.tobytes(), EXPANDED, prg))
    return DpfKeySet(keys, target_row, message)

def eval_full(key):
    """ the key's evaluation at every row, as a (rows, message_bytes) table """
    if key.variant == SEEDED:
        material = key.prg.expand(key.material, key.geometry.size)
    else:
        material = key.material
    if len(material) != key.geometry.size:
        raise GeometryError("Key material of {} bytes is corrupt for geometry {}".format(
            len(material), key.geometry))
    return np.frombuffer(material, dtype=np.uint8).reshape((key.geometry.rows, key.geometry.message_bytes))

def xor_accumulate(accumulator, evaluation, out=None):
    """ element-wise XOR of two tables of the same shape.  Pass out=accumulator to
    update in place """
    accumulator = np.asarray(accumulator, dtype=np.uint8)
    evaluation = np.asarray(evaluation, dtype=np.uint8)
    if accumulator.shape != evaluation.shape:
        raise GeometryError("Cannot XOR tables of shapes {} and {}".format(accumulator.shape, evaluation.shape))
    return np.bitwise_xor(accumulator, evaluation, out=out)

def combine(evaluations):
    """ XOR of a list of tables """
    evaluations = list(evaluations)
    if not evaluations:
        raise ValidationError("Nothing to combine")
    result = np.array(evaluations[0], dtype=np.uint8)
    for evaluation in evaluations[1:]:
        xor_accumulate(result, evaluation, out=result)
    return result

def nonzero_rows(table):
    """ [(row, message bytes)] for every row that isn't all zero """
    table = np.asarray(table, dtype=np.uint8)
    return [(int(r), table[r].tobytes()) for r in np.flatnonzero(table.any(axis=1))]

def serialize_key(key):
    """ header (party u8, rows u32, message_bytes u16, variant u8) + expanded material """
    if key.geometry.message_bytes > 0xFFFF:
        raise GeometryError("message_bytes {} does not fit the key header".format(key.geometry.message_bytes))
    material = eval_full(key).tobytes()
    return KEY_HEADER.pack(key.party_index, key.geometry.rows, key.geometry.message_bytes, EXPANDED) + material

def deserialize_key(data, max_table_bytes=DEFAULT_MAX_TABLE_BYTES, prg=DEFAULT_PRG):
    data = bytes(data)
    if len(data) < KEY_HEADER.size:
        raise DecodeError("Serialized key of {} bytes is shorter than its header".format(len(data)))
    party, rows, messageBytes, variant = KEY_HEADER.unpack_from(data)
    material = data[KEY_HEADER.size:]
    try:
        geometry = TableGeometry(rows, messageBytes, max_table_bytes)
    except GeometryError as e:
        raise DecodeError("Serialized key has a bad geometry: {}".format(e))
    if variant == EXPANDED and len(material) != geometry.size:
        raise DecodeError("Expanded key carries {} bytes of material, geometry {} needs {}".format(
            len(material), geometry, geometry.size))
    if variant == SEEDED and len(material) != prg.seed_bytes:
        raise DecodeError("Seeded key carries {} bytes, expected a {} byte seed".format(len(material), prg.seed_bytes))
    if variant not in (EXPANDED, SEEDED):
        raise DecodeError("Unknown key variant tag {}".format(variant))
    return DpfKey(geometry, party, material, variant, prg)
