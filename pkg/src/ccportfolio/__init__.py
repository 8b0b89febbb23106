"""Cardinality-constrained minimum-variance portfolios under factor models."""

from .data import (DataError, PriceTable, ReturnTable, build_adhoc, compute_returns,
                   concat_instances, load_dataset, parse_indtrack, read_indtrack, synthetic_indtrack,
                   write_indtrack)
from .factors import (MultiFactorModel, SingleFactorModel, fit_pca_factors, fit_single_index,
                      implied_covariance)
from .models import (OptimizationModel, SegmentGrid, build_ccmvfm, build_ccmvfm_la,
                     build_ewccmvfm, build_ewccmvfm_la, build_ewccmvsf, default_grids,
                     export_lp, to_mewcp)
from .lp import lagrangian_bound, solve_binary_bb, solve_lp
from .exact import (brute_force_ccmv, brute_force_clique, brute_force_ew, qp_support,
                    solve_ew_sf_bb, solve_relaxation_sf)
from .heuristics import algorithm1, algorithm2, run_heuristic
from .analysis import check_inverse_monge, monge_matrix, verify_frontier

__version__ = "0.1.0"
