# settings.py

# Solver defaults
EPSILON = 1e-3  # relative loss decrease that stops the iterations
MAX_ITER = 1000
INNER_SIGMA_SWEEPS = 3  # Gauss-Seidel passes over sigma per FAAN iteration
SIGMA_INIT = "diag_of_scm"
SEED = 0

# Numerical tolerances
SYMMETRY_RTOL = 1e-8  # asymmetry above this (relative) is rejected on ingest
PSD_RTOL = 1e-10  # eigenvalues above -PSD_RTOL * |largest| count as nonnegative
POSITIVE_EIG_RTOL = 1e-9  # r_G counts eigenvalues above this * spectral norm
SINGULAR_RCOND = 1e-12  # smallest/largest eigenvalue ratio treated as singular
HEYWOOD_SIGMA_SQ = 1e-8  # fits with min sigma^2 below this are reported as Heywood-like
SECOND_ORDER_ATOL = 1e-10

# Rank selection
R_MAX = 10

# Frisch test matrices
FRISCH_SPREAD = 0.4  # off-diagonal entries of R^-1 drawn on [1 - spread, 1]
FRISCH_MAX_DRAWS = 100

# Array processing
DOA_SENSORS = 15
DOA_FREQS = (0.2, 0.25)
DOA_SNAPSHOTS = 80
DOA_SNR_DB = 0.0
GRID_STEP = 1e-4  # frequency grid over [0, 0.5)
PEAK_EXCLUSION_STEPS = 10  # minimum distance between two picked peaks, in grid steps
SWEEP_N = (40, 80, 160, 320, 500)
SWEEP_SNR_DB = (-6.0, -3.0, 0.0, 3.0, 6.0)
DOA_TRIALS = 200
DOA_EPSILON = 1e-6  # FAAN tolerance inside Monte-Carlo trials

# Portfolio
REBALANCE_DAYS = 20  # one month of trading days
HORIZON_DAYS = 84  # next four months, out of sample
LOOKBACKS = tuple(range(10, 21))

# Environment
THREADS_ENV = "FAAN_THREADS"

# CLI exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INFEASIBLE = 2
EXIT_NOT_CONVERGED = 3
EXIT_USAGE = 64
