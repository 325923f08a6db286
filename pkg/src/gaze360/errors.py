"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command line can map failures
to distinct, stable process exit statuses.
"""


class Gaze360Error(Exception):
    exit_code = 1


# gaze geometry
class EmptyDetections(Gaze360Error):
    exit_code = 10


class UnknownTag(Gaze360Error):
    exit_code = 11


class Underdetermined(Gaze360Error):
    exit_code = 12


class Degenerate(Gaze360Error):
    exit_code = 13


class AtInfinity(Gaze360Error):
    exit_code = 14


class LowConfidence(Gaze360Error):
    exit_code = 15


class OutsideScreen(Gaze360Error):
    """Projected gaze lands outside the screen's scene quad plus margin."""

    exit_code = 16


class NoScreen(Gaze360Error):
    """Gaze falls in no detected tag strip."""

    exit_code = 17


# attention maps / masks
class BadConfig(Gaze360Error, ValueError):
    exit_code = 20


class InvalidMap(Gaze360Error):
    exit_code = 21


class ShapeMismatch(Gaze360Error, ValueError):
    exit_code = 22


class FormatError(Gaze360Error, ValueError):
    exit_code = 23


# metrics
class NotNormalized(Gaze360Error, ValueError):
    exit_code = 30


class ZeroVariance(Gaze360Error, ValueError):
    exit_code = 31


class NoFixations(Gaze360Error, ValueError):
    exit_code = 32


class EmptyGroundTruth(Gaze360Error, ValueError):
    exit_code = 33


class NotAProbability(Gaze360Error, ValueError):
    exit_code = 34


# dataset
class OutOfBounds(Gaze360Error, ValueError):
    exit_code = 40


class UnknownTown(Gaze360Error, ValueError):
    exit_code = 41


class InsufficientHistory(Gaze360Error, ValueError):
    exit_code = 42


# synthetic harness
class MissingOutputs(Gaze360Error):
    exit_code = 50


class VerificationFailed(Gaze360Error):
    exit_code = 51


class UsageError(Gaze360Error):
    exit_code = 2
