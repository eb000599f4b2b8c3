"""Toolkit for the designing-data loop: declare expected distributions before
collection, audit observed collection against them, and use familiarity
scores over model activations to debug and resample datasets."""

from .errors import (
    DataDesignError,
    ModelError,
    PlanError,
    RecordError,
    ResampleError,
    StoreError,
)
from .familiarity import (
    ActivationMatrix,
    FamiliarityModel,
    FamiliarityScores,
    fit_familiarity,
    score_all,
    tail,
)
from .monitor import (
    DivergenceThresholds,
    SampleRecord,
    divergence,
    emd_1d,
    gap_report,
    snapshot,
    tv_distance,
)
from .pca import PcaModel, fit_pca, project
from .plan import (
    DatasetPlan,
    DimensionSpec,
    create_plan,
    enumerate_intersections,
    make_dimension,
    normalize_expected,
    record_reflexive,
    validate_plan,
)
from .resample import (
    DatasetVersion,
    ResamplePlan,
    SamplingStrategy,
    apply_plan,
    build_plan,
    match_candidates,
    review_queue,
    select_exemplars,
    select_removals,
)
from .vbgmm import VbGmmConfig, VbGmmModel, fit_vbgmm, log_likelihood

__version__ = "0.1.0"
