# nbmc/config_base.py
#
# Numeric policy constants shared by the library and the CLI. Nothing here is
# read from the environment: the command line is the only override surface.

TOOL_VERSION = "0.1.0"

# --- Summation / special functions ---
# Any pmf/cdf or integral/sum check needing more terms than this is rejected.
MAX_SUMMED_TERMS = 10**8
# Rows per vectorised block when summing negative-binomial terms
SUM_BLOCK_SIZE = 1 << 16
# Incomplete gamma: Poisson terms further than this many standard deviations
# (plus a fixed guard) from the dominant term are below double resolution.
GAMMA_WINDOW_SIGMAS = 12.0
GAMMA_WINDOW_GUARD = 60
# Exact log-factorial table upper index
LOG_FACTORIAL_TABLE_MAX = 20

# --- Interval bounds ---
# Real-valued n1/n2 arguments within this many ulps of an integer are snapped
# to it before ceil/floor.
SNAP_ULPS = 4
# Largest index representable exactly as a double
MAX_INDEX = 2**53

# --- Planner ---
DEFAULT_MAX_N = 10**6
MARGIN_SEARCH_UPPER = 1e3
MARGIN_TOLERANCE = 1e-6

# --- Verification tolerances ---
PROPOSITION_TOLERANCE = 1e-12
LEMMA_TOLERANCE = 1e-12
COEFFICIENT_TOLERANCE = 1e-12
# Largest j + 1 for exact power sums in the coefficient formulas
MAX_POWER_EXPONENT = 40

# Integral/sum check subsampling: ranges up to this size are checked exhaustively ...
LEMMA_EXHAUSTIVE_LIMIT = 10**5
# ... otherwise every n* <= LEMMA_DENSE_PREFIX, then geometrically spaced points
LEMMA_DENSE_PREFIX = 10**3
LEMMA_GEOMETRIC_POINTS = 2000

# --- Random sources ---
RNG_NAME = "numpy.PCG64"
# Bump when the way outcomes are drawn from the generator changes; golden
# values in the tests must be regenerated.
RNG_VERSION = 1
RNG_BLOCK_SIZE = 4096

# --- Session store ---
DEFAULT_STORE_FILE = "nbmc_sessions.db"
DEFAULT_STORE_URL = f"sqlite:///{DEFAULT_STORE_FILE}"

# --- Report serialisation ---
# 17 significant digits round-trip every double, in JSON and CSV alike.
FLOAT_FORMAT = ".17g"

# --- CLI defaults ---
# Curves: start:stop:count margin grid
DEFAULT_M_GRID = "0.05:2.0:196"
# Verification grid
DEFAULT_VERIFY_N_MIN = 3
DEFAULT_VERIFY_N_MAX = 50
DEFAULT_VERIFY_PS = (0.01, 0.1, 0.3, 0.7)
DEFAULT_J_MAX = 20
DEFAULT_GRID_DENSITY = 200
