#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

"""Exceptions raised across privstream.

Everything derives from PrivstreamError (a RuntimeError, which is what the
rest of the code base has always raised) so callers that only care about
"something went wrong" can keep catching RuntimeError. The command line maps
ValidationError to exit code 1 and everything else to exit code 2.
"""


class PrivstreamError(RuntimeError):
    pass

class ValidationError(PrivstreamError, ValueError):
    """Bad input: parameters, geometry, datasets, command line values."""
    pass

class InvalidParameterError(ValidationError):
    pass

class InfiniteEpsilonError(InvalidParameterError):
    pass

class GeometryError(ValidationError):
    pass

class UndefinedRelativeError(ValidationError, ZeroDivisionError):
    pass

class ZeroProbabilityError(InvalidParameterError, ZeroDivisionError):
    """A conditional probability was asked for given an event of probability zero."""
    pass

class DatasetError(ValidationError):
    def __init__(self, message, line=None):
        if line is not None:
            message = "line {}: {}".format(line, message)
        super(DatasetError, self).__init__(message)
        self.line = line

class ProtocolError(PrivstreamError):
    pass

class FrameError(ProtocolError):
    pass

class DecodeError(ProtocolError):
    pass

class ResultPendingError(ProtocolError):
    """The epoch asked for has not been finalized yet."""
    pass

class SubmissionError(PrivstreamError):
    pass

class DuplicateResponseError(SubmissionError):
    pass

class EpochClosedError(SubmissionError):
    """The epoch a share was aimed at is no longer open. current_epoch_id is
    the epoch to retry in, when known."""
    def __init__(self, message, epoch_id=None, current_epoch_id=None):
        super(EpochClosedError, self).__init__(message)
        self.epoch_id = epoch_id
        self.current_epoch_id = current_epoch_id

class SubmissionAbortedError(SubmissionError):
    pass

class PeerTimeoutError(PrivstreamError):
    def __init__(self, message, missing=()):
        super(PeerTimeoutError, self).__init__(message)
        self.missing = sorted(missing)

class AuditError(PrivstreamError):
    pass

class AuditReplayError(AuditError):
    pass

class MissingParticipantError(AuditError):
    pass

class ExcisionError(PrivstreamError):
    pass
