"""Error taxonomy shared across the pipeline.

Every error carries a stable ``code`` string (the class name without the
``Error`` suffix) so the CLI can emit machine-readable error documents
without maintaining a parallel mapping.
"""
from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""

    @property
    def code(self) -> str:
        name = type(self).__name__
        return name[: -len("Error")] if name.endswith("Error") else name


# --- vector math -----------------------------------------------------------

class ZeroVectorError(PipelineError):
    """Normalization of a vector with norm below the zero threshold."""


class NonFiniteVectorError(PipelineError):
    """A vector contains NaN or infinity."""


class DimensionMismatchError(PipelineError):
    """Operands disagree on embedding dimension."""


class EmptyCategoryError(PipelineError):
    """A subspace was requested for a category with no embeddings."""


class DegenerateFusionError(PipelineError):
    """Fusion inputs cancel; the fused vector has no direction."""


# --- catalog / taxonomy ----------------------------------------------------

class UnknownCategoryError(PipelineError):
    """A category id is not declared in the taxonomy."""


class CategoryMismatchError(PipelineError):
    """An operation mixed assets or queries across categories."""


class InvalidTaxonomyError(PipelineError):
    """The taxonomy file violates its own structural rules."""


# --- index snapshots -------------------------------------------------------

class SnapshotIoError(PipelineError):
    """A snapshot file is unreadable or structurally broken."""


class ChecksumMismatchError(PipelineError):
    """Snapshot payload does not match its recorded checksum."""


class VersionMismatchError(PipelineError):
    """Snapshot was written by an incompatible format version."""


# --- routing / evidence ----------------------------------------------------

class AdvisorUnavailableError(PipelineError):
    """The routing advisor could not be reached; routing may proceed."""


class NoViewsAvailableError(PipelineError):
    """No rendered views exist for a look that requires at least one."""


class MissingTextPriorError(PipelineError):
    """A routed category has no text prior embedding."""


# --- judge / assembly ------------------------------------------------------

class JudgeUnavailableError(PipelineError):
    """The judge backend failed or ran out of scripted responses."""


class MissingCoreCategoryError(PipelineError):
    """A required core category has no usable candidates."""


class BudgetInfeasibleError(PipelineError):
    """Candidate generation cannot satisfy caps and core requirements."""


# --- synthetic data --------------------------------------------------------

class InfeasibleSpecError(PipelineError):
    """A synthetic spec cannot produce the requested construction."""


class ScenarioConstructionFailedError(PipelineError):
    """Planted scenario resampling exhausted its retry budget."""
