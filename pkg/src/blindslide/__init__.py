"""Blinded multi-rater annotation on pyramidal slides.

Subsystems: ``pyramid`` (portable slide container + synthetic slides),
``annostore`` (annotations, labels, blinding), ``screening`` (tissue
mask and guided field-of-view plan), ``discovery`` (jump-to-unlabeled
iterator), ``stats`` (agreement and pace), ``service`` (HTTP API) and
``cli`` (headless operations).
"""

from .annostore import (
    Annotation,
    AnnotationStore,
    ClassDef,
    Coordinate,
    Label,
    Person,
    RenderDescriptor,
    SlideRecord,
    blinded_render,
)
from .discovery import DiscoveryState, next_discovery_view, remaining, unlabeled_for, view_complete
from .pyramid import (
    Blob,
    Dot,
    PyramidSlide,
    SyntheticSpec,
    generate_synthetic_slide,
    open_slide,
    random_synthetic_spec,
)
from .screening import (
    ScreeningPlan,
    TissueMask,
    build_screening_plan,
    compute_tissue_mask,
    morphological_close,
    navigate,
    otsu_threshold,
    progress,
)
from .stats import (
    ConfusionMatrix,
    KappaResult,
    TimingStats,
    annotation_timing,
    cohens_kappa,
    confusion_matrix,
)

__version__ = "0.1.0"
