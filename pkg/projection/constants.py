"""Numerical tolerances shared by the projection code and its checks."""

# Feasibility of a projected perturbation
MEAN_TOL = 1e-12
NORM_REL_TOL = 1e-12
IDEMPOTENCE_TOL = 1e-12

# Closed form vs Dykstra oracle, max-abs deviation
ORACLE_TOL = 1e-8

# Dykstra defaults when settings do not override them
DYKSTRA_MAX_ITERS = 10000
DYKSTRA_TOL = 1e-12

# Feasibility after an attack loop, which accumulates more round-off
ATTACK_MEAN_TOL = 1e-10
ATTACK_NORM_REL_TOL = 1e-10

# Randomized projection equivalence suite
SUITE_INSTANCES = 1000
SUITE_FEASIBLE_POINTS = 100
SUITE_MIN_M = 2
SUITE_MAX_M = 64
SUITE_ENTRY_BOUND = 2.0
SUITE_MAX_RHO = 3.0
