"""Spatial Lambda-coalescent: engine, couplings and observers."""

from coalsim.spatial.state import (Boundary, BoundaryKind, Mode, SpatialConfig, SpatialState,
                                   parse_init)
from coalsim.spatial.core import EVENT_NAMES, Observer, RunRecord, simulate, simulate_crw
from coalsim.spatial.couplings import (OriginBlockStats, RestrictionResult, pair_partition,
                                       paired_process_counts, random_partition,
                                       restricted_coupling, run_origin_block)
from coalsim.spatial.observe import (DensityResult, MultiScaleStats, SurvivorsResult,
                                     density_decay, multiscale_observe, survivors_estimate)
