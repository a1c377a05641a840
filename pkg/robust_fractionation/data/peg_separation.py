"""
PEG Oligomer Separation Data
Process parameters and retention times for the polyethylene glycol fractionation example.

Retention times are taken as input data (minutes); they are not recomputed from the
acetonitrile fraction. The default window and step reproduce the reference model sizes
(950 grid points, 6672 variables, 10450 rows).
"""

# Process parameters
REQUIRED_PURITY = 0.95  # R
NTP = 120000  # number of theoretical plates, sets peak width sigma = mu / sqrt(NTP)
S_ACN = 0.25  # acetonitrile fraction in the mobile phase (input side only)
EPS_SIGMA = 0.01  # variance slack in the second-moment row

# Degree of polymerization of the species in the feed
SPECIES = [30, 31, 32, 33]
DESIRED_SPECIES = [32]

# Nominal retention times (minutes)
NOMINAL_RETENTION = {
    30: 2.93,
    31: 3.10,
    32: 3.29,
    33: 3.50,
}

# Retention-time bounds (mu_minus, mu_plus) per first-moment uncertainty eps_mu
RETENTION_BOUNDS = {
    0.004: {
        30: (2.868, 2.994),
        31: (3.033, 3.175),
        32: (3.212, 3.373),
        33: (3.407, 3.589),
    },
    0.0042: {
        30: (2.865, 2.998),
        31: (3.030, 3.179),
        32: (3.209, 3.377),
        33: (3.403, 3.593),
    },
    0.0044: {
        30: (2.862, 3.001),
        31: (3.026, 3.183),
        32: (3.205, 3.382),
        33: (3.399, 3.598),
    },
}

DEFAULT_EPS_MU = 0.004

# Grid window (minutes)
GRID_T0 = 2.80
GRID_T_MAX = 3.749
GRID_DELTA = 0.001

# Window used by convergence sweeps; its span divides every step in SWEEP_DELTAS
SWEEP_T_MAX = 3.752
SWEEP_DELTAS = [0.008, 0.004, 0.002, 0.001]

# Reference fractionation times (minutes) per (eps_mu, moment_control)
REFERENCE_FRACTIONATION = {
    (0.004, False): 0.192,
    (0.004, True): 0.192,
    (0.0042, False): 0.120,
    (0.0042, True): 0.169,
    (0.0044, False): 0.112,
    (0.0044, True): 0.112,
}

# Reference model sizes per grid step at the default window
REFERENCE_MODEL_SIZES = {
    0.001: {"variables": 6673, "rows": 10450},
    0.0005: {"variables": 13323, "rows": 20900},
    0.0001: {"variables": 66523, "rows": 104500},
}
