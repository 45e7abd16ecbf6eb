"""Environment configuration."""

import os

# Default worker count for replica-parallel Monte Carlo
DEFAULT_THREADS = int(os.getenv("ORTHODUAL_THREADS", "1"))

# Largest state space a FiniteGenerator may enumerate
MAX_STATE_SPACE = int(os.getenv("ORTHODUAL_MAX_STATES", "100000"))

# Largest state space for which a dense matrix exponential is formed
MAX_DENSE_STATES = int(os.getenv("ORTHODUAL_MAX_DENSE_STATES", "4000"))

# Per-site occupancy cap for truncated Poisson sums
MAX_OCCUPANCY = int(os.getenv("ORTHODUAL_MAX_OCCUPANCY", "400"))

# Element-operations budget above which the uniformized series is summed spectrally
DIRECT_KERNEL_BUDGET = float(os.getenv("ORTHODUAL_DIRECT_KERNEL_BUDGET", "5e7"))

# Largest lattice box radius an exact lattice sum may allocate
MAX_LATTICE_RADIUS = int(os.getenv("ORTHODUAL_MAX_LATTICE_RADIUS", "4096"))

# Single-walker kernel tables kept in memory
KERNEL_CACHE_SIZE = int(os.getenv("ORTHODUAL_KERNEL_CACHE_SIZE", "32"))
