"""webcat: classify webpages by sampling and scoring their image content.

A page is crawled for up to a fixed quota of images; each image becomes a
feature vector and a class probability from a random forest; the page-level
verdict comes from either the mean probability or a count of images above a
threshold. An evaluation harness sweeps thresholds into PR/ROC curves and
ranks the decision rules.
"""

from .aggregation import (
    MeanDecision,
    PageResult,
    TopNDecision,
    UnclassifiableError,
    aggregate_page,
    method1_mean,
    method2_topn,
)
from .crawler import (
    CrawlConfig,
    CrawlOutcome,
    CrawlStatus,
    ImageLink,
    RequestsFetcher,
    SourceKind,
    crawl,
    extract_image_links,
    extract_suburls,
)
from .evaluation import (
    BalancePoint,
    ConfusionCounts,
    EvalCurve,
    LabeledPage,
    Method,
    balance_point,
    confusion,
    rank_methods,
    sweep,
)
from .features import (
    Backend,
    ExtractorSpec,
    FeatureVector,
    extract,
    extract_batch,
)
from .forest import (
    Forest,
    ForestHyperparams,
    TrainingSet,
    gini,
    load_forest,
    oob_accuracy,
    predict_proba,
    save_forest,
    train,
)
from .images import (
    ImageRecord,
    RejectReason,
    Rejection,
    ValidationPolicy,
    normalize,
    validate,
)
from .pipeline import PageClassifier, PageOutcome

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "BalancePoint",
    "ConfusionCounts",
    "CrawlConfig",
    "CrawlOutcome",
    "CrawlStatus",
    "EvalCurve",
    "ExtractorSpec",
    "FeatureVector",
    "Forest",
    "ForestHyperparams",
    "ImageLink",
    "ImageRecord",
    "LabeledPage",
    "MeanDecision",
    "Method",
    "PageClassifier",
    "PageOutcome",
    "PageResult",
    "RejectReason",
    "Rejection",
    "RequestsFetcher",
    "SourceKind",
    "TopNDecision",
    "TrainingSet",
    "UnclassifiableError",
    "ValidationPolicy",
    "aggregate_page",
    "balance_point",
    "confusion",
    "crawl",
    "extract",
    "extract_batch",
    "extract_image_links",
    "extract_suburls",
    "gini",
    "load_forest",
    "method1_mean",
    "method2_topn",
    "normalize",
    "oob_accuracy",
    "predict_proba",
    "rank_methods",
    "save_forest",
    "sweep",
    "train",
    "validate",
]
