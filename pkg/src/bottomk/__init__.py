"""Bottom-k and k-mins sketches with subpopulation-weight estimators and
confidence bounds."""

from .confidence import (ConfidenceInterval, SumExpSpec, empirical_quantile, pri_bounds_subpop,
                         pri_bounds_total, quantile_method_solve, sample_sum_exp,
                         solve_normal_approx, ws_bounds_subpop, ws_bounds_subpop_with_total,
                         ws_bounds_total, wsr_bounds_total)
from .errors import (BottomKError, CapabilityError, ConfigError, DomainError, InputError,
                     MonotonicityError, PredicateError, SketchFormatError, SketchStateError)
from .estimators import (AdjustedWeightAssignment, ScParams, estimate_attribute_sum,
                         estimate_subpop, f_subset_prob, ml_subpop, ml_subpop_with_total,
                         ml_total_weight, prefix_adjusted_weights, rc_adjusted_weights,
                         sc_adjusted_weights_exact, sc_adjusted_weights_markov,
                         wsr_subpop_with_total, wsr_total_weight)
from .io import deserialize_sketch, read_items_csv, serialize_sketch
from .predicates import MATCH_ALL, Predicate
from .ranks import (RankFamily, RankValue, draw_rank, make_rng, rank_cdf, redraw_sketch_ranks,
                    spawn_rngs)
from .sketch import (BottomKSketch, KMinsSketch, SketchEntry, WeightedItem, build_bottom_k,
                     build_bottom_k_stream, build_k_mins, merge_sketches, sketch_from_ranks)

__version__ = "0.1.0"
