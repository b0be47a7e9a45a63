"""Constants for the dualitykit package."""
import logging

_LOGGER: logging.Logger = logging.getLogger(__package__)

DUALITYKIT_VERSION = "0.3.0"
DUALITYKIT_TOOL = "dualitykit"

# Numeric tolerances (all dimensionless)
TOL_ENTRY = 1e-12       # negative entries above -TOL_ENTRY are clamped to 0
TOL_ROW = 1e-10         # row sums of stochastic and generator matrices
TOL_DUALITY = 1e-9      # max-norm residual of PH - HQ^T
TOL_SEMIGROUP = 1e-8    # residual of exp(tLX)H - H exp(tLY)^T
TOL_SPECTRAL = 1e-8     # distance between matched eigenvalues
TOL_LP = 1e-9           # convex feasibility of H nu = target
TOL_PIVOT = 1e-10       # rank decisions
TOL_EXTREMAL = 1e-10    # column deduplication and extremality
TOL_REVERSIBLE = 1e-10  # detailed balance preconditions
TOL_EXACT = 1e-12       # identities that hold exactly in exact arithmetic
POISSON_TAIL = 1e-14    # uniformization truncation mass

# Uniformization splits t so that each piece has at most this Poisson mean
UNIFORMIZATION_MAX_MEAN = 64.0

# Times at which semi-group consequences of generator identities are sampled
SEMIGROUP_SAMPLE_TIMES = (0.1, 0.5, 1.0)
INVARIANCE_SAMPLE_TIMES = (0.01, 0.1, 1.0)

# Search range for the jump intensity of the continuous cone dual
LAMBDA_SEARCH_MAX_EXPONENT = 20

# Dense caps
TENSOR_MAX_SITES = 20
SEP_MIN_SITES = 2
SEP_MAX_SITES = 10
HYPERGEOMETRIC_EXACT_MAX = 30

# Monte Carlo
DEFAULT_N_SE = 3.0
DEFAULT_BATCH_SIZE = 2000
DEFAULT_SDE_DT = 1e-4
SDE_BOUNDARY_EPS = 1e-9
SDE_CLAMP_WARN_FRACTION = 1e-3
BA_POPULATION_CAP = 10**6

# Seed stream keys (first element of numpy SeedSequence spawn keys)
STREAM_ARROWS = 0
STREAM_TYPES = 1
STREAM_INITIAL = 2
STREAM_BATCHES = 3

# Environment
ENV_THREADS = "DUALITY_KIT_THREADS"
DEFAULT_THREADS = 4
