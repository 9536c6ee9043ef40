"""Custom exceptions for introspect_vmc."""


class IntrospectVMCError(Exception):
    """Base exception for all introspect_vmc errors."""


class DimensionError(IntrospectVMCError):
    """Exception raised when an input width or shape does not match a layer."""


class NonFiniteError(IntrospectVMCError):
    """Exception raised when a NaN or infinite value appears in a computation."""


class InvalidNoiseError(IntrospectVMCError):
    """Exception raised when dropout noise is not drawn from the open interval (0, 1)."""


class ConfigurationError(IntrospectVMCError):
    """Exception raised when a configuration value is invalid or inconsistent."""


class CheckpointError(IntrospectVMCError):
    """Exception raised when a checkpoint cannot be read or does not match the model."""


class DatasetError(IntrospectVMCError):
    """Exception raised when a dataset file is malformed or lacks required targets."""


class ExpertFailureError(IntrospectVMCError):
    """Exception raised when the scripted expert stalls or fails too often."""


class TrainingDivergedError(IntrospectVMCError):
    """Exception raised when a training loss becomes NaN."""

    def __init__(self, message: str, seed: int, epoch: int):
        super().__init__(f"{message} (seed={seed}, epoch={epoch})")
        self.seed = seed
        self.epoch = epoch


class InsufficientSamplesError(IntrospectVMCError):
    """Exception raised when too few samples are available for an estimate."""


class ArtifactChainError(IntrospectVMCError):
    """Exception raised when a pipeline artifact is missing or its checksum chain is broken."""
