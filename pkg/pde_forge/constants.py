import math

# Local polynomial differentiation
DIFF_WINDOW = 9     # Points per 1-D fit window (odd)
DIFF_DEGREE = 5     # Degree of the fitted polynomial
DIFF_MAX_ORDER = 3  # Highest pure derivative order cached per axis

# Structure of candidate equations
MAX_FACTORS_PER_TERM = 2
N_TERMS_MIN = 2
N_TERMS_MAX = 6
MAX_POWER = 2
STRUCTURE_RETRIES = 50  # Redraws per term before giving up on a distinct signature

# Sparse regression
LASSO_TOL = 1e-6
LASSO_MAX_ITER = 10_000
SUPPORT_THRESHOLD = 1e-9  # |beta| above this enters the OLS support
ZERO_VARIANCE = 1e-12     # Relative std below which a column counts as constant

# Single-equation evolutionary search
POPULATION_SIZE = 32
EPOCHS = 50
TOURNAMENT_SIZE = 4
P_TERM_MUTATION = 0.2
P_PARAM_MUTATION = 0.3
P_FACTOR_SWAP = 0.5
SIGMA_PARAM = 0.1  # Fraction of the parameter range
EPS_FIT = 1e-9     # Residual floor, caps the fitness at 1 / EPS_FIT

# MOEA/DD meta-optimization over sparsity constants
DIVISIONS = 3            # Simplex-lattice H; 56 weights for 6 objectives
NEIGHBORS = 5            # K nearest weight vectors
MOEADD_EPOCHS = 20
P_MUT = 0.3
P_XOVER = 0.7
SIGMA_MUT = 0.05         # Fraction of the lambda range
P_LOCAL = 0.9
LAMBDA_BOUNDS = (1e-6, 1.0)
PBI_THETA = 5.0
MAX_WEIGHTS = 100_000
IDEAL_SAFETY = 0.9       # Pilot quality is scaled by this factor
LAMBDA_DIGITS = 6        # Significant digits for evaluation memoization

# Synthetic fixtures
TWO_PI = 2.0 * math.pi
HEAT_SHAPE = (64, 64)            # (t, x)
TAYLOR_GREEN_SHAPE = (32, 48, 48)  # (t, x, y)
TIME_STEP = 0.02

# Command line
THREADS_ENV = "PDE_FORGE_THREADS"
EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
