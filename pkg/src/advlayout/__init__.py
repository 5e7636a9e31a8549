"""Black-box sticker layout optimization for universal adversarial UV textures."""

from advlayout.compositor import (
    Placement,
    RegionMap,
    TextureCanvas,
    compose,
    inscribed_square,
    orientation_for,
    paste_sticker,
    render_preview,
)
from advlayout.errors import (
    AdvLayoutError,
    CorruptCheckpointError,
    EvaluationError,
    InvalidArgumentError,
    LayoutInfeasibleError,
    MissingStickerError,
    OptimizationAborted,
    OracleError,
)
from advlayout.fitness import FitnessEvaluator, FitnessReport, fitness
from advlayout.layout import (
    Circle,
    Layout,
    Mask,
    SearchConfig,
    check_circle,
    init_layout,
    layout_stats,
    radius_from_ratio,
)
from advlayout.metrics import EvalRecord, group_by_heading, p_at_05
from advlayout.oracle import (
    ExternalOracle,
    ScriptedOracle,
    SyntheticCoverageOracle,
    ViewResult,
    ViewSpec,
    spawn_external,
    synthetic_objectness,
)
from advlayout.search import OptimizationResult, optimize, resume
from advlayout.stickers import (
    Sticker,
    StickerPool,
    compute_gain,
    load_pool,
    random_transform,
    select_important,
    select_random,
)

__version__ = "0.1.0"
