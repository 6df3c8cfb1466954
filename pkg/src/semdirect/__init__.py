"""Deterministic rectangle-dividing optimisation plus a query-based
semantic-robustness harness for ground-plane object detectors."""

from .benchfn import BENCH_FUNCTIONS, BenchFunction, eval_function, get_function
from .detectors import (
    CachingDetector,
    Detector,
    DetectorError,
    HttpDetector,
    ProtocolError,
    ReplayDetector,
    SensitivityProfile,
    SubprocessDetector,
    SyntheticDetector,
)
from .optimizer import (
    IterationStats,
    ObjectiveError,
    OptimizerConfig,
    OptResult,
    condition_counts,
    convergence_bound,
    natural_extremes,
    optresult_to_dict,
    random_search,
    rate_bounds,
    run,
    select_po_direct,
    select_po_simple,
    write_optresult_json,
    write_trajectory_csv,
)
from .perturb import (
    PerturbationSpec,
    colour_shift,
    convolve,
    decode_and_apply,
    geometric_transform,
    hsb_to_rgb,
    motion_blur_kernel,
    rgb_to_hsb,
)
from .problem import (
    Annotation,
    EvalReport,
    Frame,
    FrameObjective,
    MethodResult,
    apply_and_report,
    build_objective,
    carryover_schedule,
    evaluate_frame,
    load_frame,
    load_manifest,
    synthetic_detector,
)
from .surrogate import (
    GtBox,
    MatchReport,
    PredBox,
    center_distances,
    greedy_match,
    match_report,
    surrogate_loss,
    surrogate_loss_with_cls,
)
from .tree import LeafLedger, PartitionNode, SamplePoint, init_root, sample_points, trisect

__version__ = "0.1.0"
