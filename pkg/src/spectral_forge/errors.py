"""Exception hierarchy shared by all spectral_forge modules.

Every error raised on bad data derives from :class:`DataError`; the CLI maps
the families to distinct exit codes (usage 2, data 3, internal 4).
"""


class SpectralForgeError(Exception):
    """Base class for all library errors."""


class DataError(SpectralForgeError):
    """Invalid input data or configuration (CLI exit code 3)."""


# --- scene_model -----------------------------------------------------------

class MissingFile(DataError):
    pass


class HeaderMismatch(DataError):
    pass


class UnknownClassId(DataError):
    pass


class IoError(DataError):
    """Read or write failure on scene/manifest files."""


class ManifestError(DataError):
    """Structurally invalid manifest (missing files, duplicate scene ids)."""


class SplitLeakage(DataError):
    """A subject id appears in both the train and the test split."""


# --- preprocess ------------------------------------------------------------

class DimensionMismatch(DataError):
    pass


class DegenerateReference(DataError):
    """White and dark reference coincide at one or more pixels."""


class MissingWavelengths(DataError):
    pass


class EmptyBand(DataError):
    """A wavelength interval selects no channels of the cube."""


# --- augment ---------------------------------------------------------------

class BatchTooSmall(DataError):
    """A mixing transform needs at least two scenes per batch."""


class EmptyBackgroundPool(DataError):
    """No batch scene is background-dominant enough to act as recipient."""


# --- ood_synth -------------------------------------------------------------

class TargetAbsent(DataError):
    pass


class InsufficientBackground(DataError):
    """Background source contains no background pixels to sample from."""


# --- metrics / ranking -----------------------------------------------------

class EmptyInput(DataError):
    pass


class ClassMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class AlgorithmSetMismatch(DataError):
    pass


# --- toy segmenter ---------------------------------------------------------

class DivergenceDetected(SpectralForgeError):
    """Training loss became NaN."""


class ChannelMismatch(DataError):
    pass
