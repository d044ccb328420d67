from .store import (
    AnnotationError,
    AnnotationRecord,
    AdjudicatedItem,
    AnnotationStore,
    AuthorizationError,
    ConflictError,
    LabelValue,
    agreement_stats,
    cohen_kappa,
)

__all__ = [
    "AnnotationError",
    "AnnotationRecord",
    "AdjudicatedItem",
    "AnnotationStore",
    "AuthorizationError",
    "ConflictError",
    "LabelValue",
    "agreement_stats",
    "cohen_kappa",
]
