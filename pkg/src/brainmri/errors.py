"""Exception hierarchy.

Every error carries a ``code`` (its class name) so the CLI can print a
single machine-readable line.
"""


class BrainMRIError(Exception):
    @property
    def code(self):
        return type(self).__name__


# volume-io
class VolumeFormatError(BrainMRIError, ValueError):
    pass


class UnknownFormat(VolumeFormatError):
    pass


class TruncatedFile(VolumeFormatError):
    pass


class UnsupportedElementType(VolumeFormatError):
    pass


class MalformedHeader(VolumeFormatError):
    pass


class ValueOutOfRange(BrainMRIError, ValueError):
    pass


# dataset-prep / augment
class IndexOutOfRange(BrainMRIError, IndexError):
    pass


class DegenerateVoi(BrainMRIError, ValueError):
    pass


class EmptyClass(BrainMRIError, ValueError):
    pass


class CropTooLarge(BrainMRIError, ValueError):
    pass


# nn-core / model
class ShapeMismatch(BrainMRIError, ValueError):
    pass


class LabelOutOfRange(BrainMRIError, ValueError):
    pass


class NonFiniteGradient(BrainMRIError, FloatingPointError):
    pass


class NonFiniteLoss(BrainMRIError, FloatingPointError):
    pass


class UnknownPreset(BrainMRIError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class SpecInvalid(BrainMRIError, ValueError):
    pass


class CheckpointError(BrainMRIError, ValueError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class Truncated(CheckpointError):
    pass


# metrics / harness
class ClassOutOfRange(BrainMRIError, ValueError):
    pass


class EmptyMatrix(BrainMRIError, ValueError):
    pass


class EmptySplit(BrainMRIError, ValueError):
    pass


class BadInput(BrainMRIError, ValueError):
    pass
