"""Exception hierarchy shared by every engine layer."""

from __future__ import annotations


class BeaconError(Exception):
    """Base class for all engine errors."""


# -- catalog / datastore -------------------------------------------------

class DuplicateName(BeaconError):
    pass


class UnknownKeyField(BeaconError):
    pass


class UnknownDataset(BeaconError):
    pass


class UnknownIndex(BeaconError):
    pass


class WrongIndexKind(BeaconError):
    pass


class IncompatibleFieldKind(BeaconError):
    pass


class DuplicateKey(BeaconError):
    pass


class ValidationFailure(BeaconError):
    pass


class NonSpatialArgument(BeaconError):
    pass


# -- query language ------------------------------------------------------

class QuerySyntaxError(BeaconError):
    """Raised by the parser with a position and the expected token set."""

    def __init__(self, message: str, line: int, column: int, expected=()):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column
        self.expected = tuple(expected)


class UnknownFunction(BeaconError):
    pass


class ArityMismatch(BeaconError):
    pass


class UnknownParameter(BeaconError):
    pass


class UnsupportedConstruct(BeaconError):
    pass


class EvalTypeError(BeaconError):
    pass


class MalformedDuration(BeaconError):
    pass


# -- execution -----------------------------------------------------------

class UnknownJob(BeaconError):
    pass


class MissingParameter(BeaconError):
    pass


# -- feeds ---------------------------------------------------------------

class PortInUse(BeaconError):
    pass


class UnknownFeed(BeaconError):
    pass


class NotConnected(BeaconError):
    pass


# -- active toolkit ------------------------------------------------------

class UnknownChannel(BeaconError):
    pass


class UnknownBroker(BeaconError):
    pass


class UnknownProcedure(BeaconError):
    pass


# -- broker node ---------------------------------------------------------

class UnknownLocalSub(BeaconError):
    pass


class ClusterUnavailable(BeaconError):
    pass
