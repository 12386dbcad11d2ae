# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

# Top-level APIs. Please think carefully before adding something to the
# top-level namespace:
# - private helper functions should go into rwrt._src
# - statistics and acceptance checks should go into rwrt.verify
# - the recursive and time-change constructions live in rwrt.experimental

from ._src.errors import (
    RwrtError, ParameterError, ConfigError, PathRangeError, TruncationError,
    EstimationError, UnsupportedError, ResourceError, NumericError,
)
from ._src.streams import RandomStream
from ._src.ensemble import ensemble_map

# sampling
from ._src.stable import (
    StableParams, SceneryKind, sample_sas, sample_scenery_law, scenery_moment,
    fgn_autocovariance, gen_fgn, gen_fbm_path,
)
from ._src.paths import LatticePath, RewardPath, RealPath, interpolate, write_path_csv
from ._src.walks import WalkKind, CollectingSpec, gen_walk, rescale

# scenery models
from ._src.scenery import (
    Site, SceneryField, EdgeSignState, rwrs, rwrt_signed, rwrt_indicator, pth_variation,
    relative_deviation, RantReport, rant_check, SchemaMode, schema_hurst, schema,
)

# stable measures and limit processes
from ._src.measures import (
    Kernel, FunctionKernel, Indicator, PiecewiseLinear, GaussianTail,
    MeasureGrid1D, ProductMeasureGrid, stable_integral, product_integral,
    ScenerySignedMeasure, mu_h_functional, DiagonalConvergenceReport, verify_diagonal_convergence,
)
from ._src.local_time import Bins, LocalTimeProfile, local_time, local_time_profiles
from ._src.limits import (
    DriverKind, DriverSpec, Flavor, KernelKind, LimitSpec, hurst_target, simulate_limit,
    normalized_copy_sum, LocalTimeScalingReport, localtime_scaling_check,
)

try:
    from .version import __version__  # noqa: F401
except ImportError:
    pass
