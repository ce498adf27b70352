#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

"""Utility functions used all over privstream: config xml access, rng handling,
size parsing, realtime logging and stack dumps.
"""
import os
import sys
import signal
import secrets
import threading
import traceback
from datetime import datetime
from urllib.parse import urlparse

import numpy as np

from toil.statsAndLogging import logger
from toil.realtimeLogger import RealtimeLogger
from toil.lib.humanize import bytes2human, human2bytes

from privstream.shared.errors import ValidationError, InvalidParameterError

def privstreamRootPath():
    """
    function for finding the installed package location (where the default config lives)
    """
    import privstream
    i = os.path.abspath(privstream.__file__)
    return os.path.split(i)[0]

def defaultConfigPath():
    return os.path.join(privstreamRootPath(), "privstream_config.xml")

def getOptionalAttrib(node, attribName, typeFn=None, default=None, errorIfNotPresent=False):
    """Get an optional attrib, or default if not set or node is None
    """
    if node is not None and attribName in node.attrib:
        value = node.attrib[attribName]
        if typeFn is None:
            return value
        try:
            if typeFn == bool:
                aname = value.lower()
                if aname == 'false':
                    return False
                elif aname == 'true':
                    return True
                return bool(int(value))
            return typeFn(value)
        except ValueError as e:
            raise ValidationError("Could not parse attribute {}=\"{}\" in <{}>: {}".format(
                attribName, value, node.tag, e))
    if errorIfNotPresent:
        raise ValidationError("Could not find attribute %s in %s node" % (attribName, node))
    return default

def parseSize(s, minimum=1):
    """ parse a human-readable size like 64Mi (or a plain byte count) """
    if s is None:
        return None
    if isinstance(s, int):
        sb = s
    else:
        try:
            sb = int(human2bytes(str(s)))
        except (ValueError, KeyError) as e:
            raise ValidationError("Could not parse size \"{}\": {}".format(s, e))
    if sb < minimum:
        raise ValidationError("Size {} is smaller than the minimum of {} bytes".format(s, minimum))
    return sb

def bytes2humanN(s):
    return bytes2human(s).replace(' ', '') if s else s

def makeURL(path_or_url):
    if urlparse(path_or_url).scheme == '':
        return "file://" + os.path.abspath(path_or_url)
    else:
        return path_or_url

def checkProbability(value, name):
    """ reject anything outside [0,1], including nan """
    try:
        fValue = float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError("{} must be a number, got {!r}".format(name, value))
    if not (0.0 <= fValue <= 1.0):
        raise InvalidParameterError("{} must be in [0, 1], got {}".format(name, value))
    return fValue

def make_rng(seed=None):
    """ numpy Generator for the given seed.  An existing Generator is passed through,
    None means fresh OS entropy.  A (seed, index, ...) tuple gives independent streams
    for workers that must still be reproducible """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.default_rng(list(seed))
    return np.random.default_rng(seed)

def random_bytes(rng, n):
    """ n random bytes.  rng=None draws from the OS (secrets), otherwise from the
    numpy Generator so seeded runs are reproducible """
    if rng is None:
        return secrets.token_bytes(n)
    return rng.bytes(n)

def random_index(rng, upper):
    """ uniform integer in [0, upper) """
    if rng is None:
        return secrets.randbelow(upper)
    return int(rng.integers(0, upper))

# send a time/date stamped message to the realtime logger, truncating it
# if it's too long (so it's less likely to be dropped)
def privstream_realtime_log(msg, max_len = 1500, log_debug=False):
    if len(msg) > max_len:
        msg = msg[:max_len-207] + " <...> " + msg[-200:]
    if not log_debug:
        RealtimeLogger.info("{}: {}".format(datetime.now(), msg))
    else:
        RealtimeLogger.debug("{}: {}".format(datetime.now(), msg))

def dumpStacksHandler(signal, frame):
    """Signal handler to print the stacks of all threads to stderr"""
    fh = sys.stderr
    print("###### stack traces {} ######".format(datetime.now().isoformat()), file=fh)
    id2name = dict([(th.ident, th.name) for th in threading.enumerate()])
    for threadId, stack in sys._current_frames().items():
        print("# Thread: {}({})".format(id2name.get(threadId,""), threadId), file=fh)
        traceback.print_stack(f=stack, file=fh)
    print("\n", file=fh)
    fh.flush()

def enableDumpStack(sig=signal.SIGUSR1):
    """enable dumping stacks when the specified signal is received"""
    if threading.current_thread() is not threading.main_thread():
        logger.debug("Not installing stack dump handler outside the main thread")
        return
    signal.signal(sig, dumpStacksHandler)
