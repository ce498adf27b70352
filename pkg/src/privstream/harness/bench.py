#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Write throughput of an aggregation cluster, measured in process: every
accepted write is decoded, evaluated and XORed in by each of the parties.
"""
import threading
import timeit
import logging
from collections import namedtuple

from privstream.dpf.dpf import TableGeometry, keygen, serialize_key, deserialize_key
from privstream.epoch.epoch_state import EpochState
from privstream.shared.common import make_rng
from privstream.shared.errors import InvalidParameterError, EpochClosedError

_log = logging.getLogger(__name__)

# keysets each client cycles through; owners are fresh for every write
POOL_SIZE = 4

# accepted writes per epoch before the bench rotates to a new one
EPOCH_WRITES = 64

BenchReport = namedtuple('BenchReport', ['rows', 'parties', 'message_bytes', 'clients', 'writes', 'seconds',
                                         'writes_per_second'])

ScalingPoint = namedtuple('ScalingPoint', ['rows', 'seconds_per_write', 'ratio_to_previous'])

class _Cluster(object):
    """ the parties' epoch states.  Every epoch_writes accepted writes the epoch is
    closed and finalized and a fresh one opened, so the logged keys stay bounded """

    def __init__(self, geometry, parties, epoch_writes=EPOCH_WRITES):
        self.geometry = geometry
        self.parties = parties
        self.epoch_writes = epoch_writes
        self.lock = threading.Lock()
        self.next_owner = 0
        self.epochs_finished = 0
        self._openEpoch(0)

    def _openEpoch(self, epoch_id):
        self.states = [EpochState(epoch_id, self.geometry, j, self.parties) for j in range(self.parties)]
        self.writes = 0

    def owner(self):
        with self.lock:
            self.next_owner += 1
            return self.next_owner.to_bytes(32, 'little')

    def write(self, serialized):
        """ what a server does for one share, for every party """
        owner = self.owner()
        keys = [deserialize_key(data, self.geometry.max_table_bytes) for data in serialized]
        while True:
            with self.lock:
                states = self.states
            try:
                for state, key in zip(states, keys):
                    state.submit_share(owner, key)
                break
            except EpochClosedError:
                # rotated under us, retry in the next epoch
                continue
        with self.lock:
            if states is not self.states:
                return
            self.writes += 1
            if self.writes < self.epoch_writes:
                return
            self._openEpoch(states[0].epoch_id + 1)
        self._finish(states)

    def _finish(self, states):
        intermediates = [s.close_epoch() for s in states]
        for s in states:
            s.finalize([t for j, t in enumerate(intermediates) if j != s.server_id])
        with self.lock:
            self.epochs_finished += 1

def _keyPool(geometry, parties, rng):
    pool = []
    for i in range(POOL_SIZE):
        keys = keygen(geometry, int(rng.integers(0, geometry.rows)), rng.bytes(geometry.message_bytes), parties, rng)
        pool.append([serialize_key(k) for k in keys])
    return pool

def run_throughput_bench(rows, parties, clients, duration, message_bytes=160, seed=None):
    """ accepted writes per second over `duration` seconds with `clients` writer threads """
    if clients < 0:
        raise InvalidParameterError("Client count must be nonnegative, got {}".format(clients))
    if duration <= 0:
        raise InvalidParameterError("Duration must be positive, got {}".format(duration))
    geometry = TableGeometry(rows, message_bytes)
    cluster = _Cluster(geometry, parties)
    if clients == 0:
        return BenchReport(rows, parties, message_bytes, 0, 0, 0.0, 0.0)
    rng = make_rng(seed)
    pools = [_keyPool(geometry, parties, rng) for c in range(clients)]
    counts = [0] * clients
    stop = threading.Event()

    def client(c):
        pool = pools[c]
        while not stop.is_set():
            cluster.write(pool[counts[c] % len(pool)])
            counts[c] += 1

    threads = [threading.Thread(target=client, args=(c,), name="bench-client{}".format(c)) for c in range(clients)]
    start_time = timeit.default_timer()
    for thread in threads:
        thread.start()
    stop.wait(duration)
    stop.set()
    for thread in threads:
        thread.join()
    seconds = timeit.default_timer() - start_time
    writes = sum(counts)
    _log.info("{} writes in {:.2f}s with {} rows x {} bytes, {} parties, {} clients".format(
        writes, seconds, rows, message_bytes, parties, clients))
    return BenchReport(rows, parties, message_bytes, clients, writes, seconds, writes / seconds)

def time_writes(rows, parties, writes, message_bytes=160, seed=None):
    """ seconds per write for a fixed number of sequential writes """
    geometry = TableGeometry(rows, message_bytes)
    cluster = _Cluster(geometry, parties)
    pool = _keyPool(geometry, parties, make_rng(seed))
    cluster.write(pool[0])
    start_time = timeit.default_timer()
    for i in range(writes):
        cluster.write(pool[i % len(pool)])
    return (timeit.default_timer() - start_time) / writes

def rows_scaling(rows_list=(256, 512, 1024, 2048), parties=8, writes=40, message_bytes=160, seed=None):
    """ per-write cost at each table size; with linear cost each ratio to the previous
    size is the ratio of the row counts """
    points = []
    previous = None
    for rows in rows_list:
        perWrite = time_writes(rows, parties, writes, message_bytes, seed)
        ratio = perWrite / previous if previous else None
        points.append(ScalingPoint(rows, perWrite, ratio))
        previous = perWrite
    return points
