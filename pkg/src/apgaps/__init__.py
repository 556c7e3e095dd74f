"""apgaps: consecutive primes in a fixed residue class, at desk scale."""

__version__ = "0.1.0"

from .errors import (AccuracyError, ConstructionError, DomainError, RangeError,
                     ResourceError, ToolError)
from .primes import (MertensFit, PrimeTable, cached_sieve, is_prime, load_cache,
                     next_prime, prime_window, save_cache, sieve)
from .smooth import (DickmanTable, SmoothCount, build_rho,
                     count_class_one_smooth, monotone_inclusion_check,
                     psi_exact, psi_ratio_report, restricted_smooth_sum,
                     rho_tail_integral)
from .modulus_builder import (BalanceReport, ModulusPlan, ResidueSets,
                              balance_report, build_plan, build_prime_set,
                              cut_threshold, plan_from_json, plan_to_json,
                              rankin_bound, residue_sets, sweep_balance,
                              toy_plan)
from .sieve_weights import (SeriesValue, TupleSpec, WeightParams, lambda_coeff,
                            root_count, roots_mod, roots_mod_p, singular_series,
                            tuple_spec, weight, weight_by_trial_division,
                            weight_support)
from .moments import (FunctionalReport, FourthMomentResult, MomentResult,
                      ThetaMomentResult, ap_error_sum, default_ell,
                      default_epsilon_prime, fourth_moment, moment2,
                      positivity_functional, theta_moment, weight_values)
from .pair_hunt import (GapStats, GoodWindowCount, IntervalScan, PairRecord,
                        count_good_windows, gap_statistics, hunt,
                        iter_class_pairs, scan_interval)
