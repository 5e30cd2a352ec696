"""Batch pipeline turning tagged Q&A corpora and occupational taxonomies
into time-varying technology-exposure indices, new-work measures, and
weighted fixed-effects OLS/2SLS estimates with clustered inference."""

from .corpus import (
    AbilityDescriptor,
    AbilityRequirement,
    Crosswalk,
    MicroTitle,
    Post,
    Tag,
    load_posts,
    load_tags,
    load_taxonomies,
    select_ai_posts,
)
from .errors import ConfigError, DataError, ExposureLabError, NumericalError
from .estimator import (
    RegressionResult,
    RegressionSpec,
    cluster_vcov,
    first_stage_f,
    run_spec,
    tsls,
    wls,
)
from .exposure import (
    ExposureSeries,
    ability_exposure,
    aggregate,
    combine_augmentation,
    microtitle_exposure,
    occupation_automation,
    shift_years,
    standardize,
)
from .hdfe import absorb_fixed_effects
from .newwork import (
    NewWorkLedger,
    TitleSet,
    build_ledger,
    cumulative_share,
    detect_new_work,
    normalize_title,
)
from .panel import build_panel, percentile_rank, skill_partition
from .scoring import smooth_question_scores, tag_year_scores
from .semlink import (
    EmbeddingStore,
    TransitionMatrix,
    cosine_clamped,
    hash_embeddings,
    joint_top_quantile_average,
    load_embedding_store,
    write_embedding_store,
)

__version__ = "0.1.0"
