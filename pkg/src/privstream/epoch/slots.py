#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Where and when to write: slot choice, dummy writes, epoch spreading and the
collision / capacity arithmetic used to size a deployment.
"""
import math
from collections import namedtuple

from privstream.shared.common import random_index
from privstream.shared.errors import ValidationError, GeometryError

WriteRequest = namedtuple('WriteRequest', ['target_row', 'message'])

DeploymentPlan = namedtuple('DeploymentPlan', ['clusters', 'servers', 'writes_per_cluster', 'collision_probability',
                                               'expected_collisions'])

def pick_slot(rows, rng=None):
    """ uniform row index """
    if rows < 2:
        raise GeometryError("Need at least 2 rows to hide a write, got {}".format(rows))
    return random_index(rng, rows)

def pick_dummy(geometry, rng=None):
    """ a zero message at a uniform row.  It XORs to nothing wherever it lands """
    return WriteRequest(pick_slot(geometry.rows, rng), bytes(geometry.message_bytes))

def plan_epoch_spread(window_epochs, rng=None):
    """ index of the one epoch in the window that carries the real write; the owner
    sends dummies in all the others """
    if window_epochs < 1:
        raise ValidationError("The spreading window needs at least one epoch, got {}".format(window_epochs))
    return random_index(rng, window_epochs)

def _checkWritersRows(w, R):
    if w < 0:
        raise ValidationError("Writer count must be nonnegative, got {}".format(w))
    if R < 1:
        raise ValidationError("Row count must be positive, got {}".format(R))

def collision_probability(w, R):
    """ birthday bound: chance that at least two of w uniform writers pick the same of R rows """
    _checkWritersRows(w, R)
    if w <= 1:
        return 0.0
    if w > R:
        return 1.0
    noCollision = 1.0
    for i in range(w):
        noCollision *= 1.0 - i / R
    return 1.0 - noCollision

def expected_collisions(w, R):
    """ expected number of writers who share their row with someone """
    _checkWritersRows(w, R)
    if w == 0:
        return 0.0
    return w * (1.0 - (1.0 - 1.0 / R) ** (w - 1))

def surplus_writes(w, R):
    """ expected number of writes beyond the first in each occupied row """
    _checkWritersRows(w, R)
    return w - R * (1.0 - (1.0 - 1.0 / R) ** w)

def deployment_plan(owners, rows, servers_per_cluster, window_seconds=1.0, cluster_seconds_per_table=1.0):
    """ how many independent server clusters it takes so every owner gets a row within the window.
    A cluster finalizes one table of `rows` writes every cluster_seconds_per_table seconds """
    if owners < 0 or rows < 1 or servers_per_cluster < 2:
        raise ValidationError("Need owners >= 0, rows >= 1 and at least 2 servers per cluster")
    if window_seconds <= 0 or cluster_seconds_per_table <= 0:
        raise ValidationError("Window and per-table times must be positive")
    writesPerCluster = rows * window_seconds / cluster_seconds_per_table
    clusters = int(math.ceil(owners / writesPerCluster)) if owners else 0
    perTable = int(math.ceil(owners / clusters / (window_seconds / cluster_seconds_per_table))) if clusters else 0
    return DeploymentPlan(clusters, clusters * servers_per_cluster, writesPerCluster,
                          collision_probability(perTable, rows), expected_collisions(perTable, rows))
