#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Constants for oscigeo
"""

VERSION = "1.0.0"

# Scale radix of every ball family (B_j has log-radius RADIX**j)
RADIX = 3

# Jets
DEFAULT_M_MAX = 6
ABSOLUTE_ORDER_CAP = 12

# Atlases
DEFAULT_SCALE_CAP = 0
BUMP_FLAT_FRACTION = 1.0 / 3.0  # profile is identically 1 on |t| <= c

# Grids and suprema
DEFAULT_GRID_POINTS = 2048
GEOMETRIC_GRID_FRACTION = 0.5  # share of grid points packed geometrically near singular endpoints
GEOMETRIC_GRID_FLOOR = 1e-4  # smallest geometric node as a fraction of the interval length
CONVEXITY_TOLERANCE = 1e-10
EPSILON_LATTICE_STEP = 1e-3  # resolution of the log-epsilon search lattice

# Implicit constants for the scale hypotheses
DEFAULT_K_HIGH = 10.0
DEFAULT_K_FIRST = 10.0
DEFAULT_CANONICAL_SAMPLES = 64
DEFAULT_LIPSCHITZ_N = 2

# Integration by parts
GRADIENT_THRESHOLD = 1e-12
MAX_IBP_ORDER = 5
MAX_IBP_DIM = 3

# Littlewood-Paley operators
DEFAULT_TANH_SINH_LEVEL = 6
DEFAULT_ANGULAR_NODES = 48
GAUSS_LEGENDRE_ORDER = 24
MIN_NODES_PER_AXIS = 32
RICHARDSON_TOLERANCE = 1e-6
MOMENT_TOLERANCE = 1e-10

# Oscillatory oracle
ORACLE_PANEL_ORDER = 20
ORACLE_NODE_CAP = 20_000_000
DEFAULT_ORACLE_TOLERANCE = 1e-10
LOW_FREQUENCY_THRESHOLD = 10.0

# Carnot-Caratheodory geometry
DEFAULT_CONTROL_PIECES = 16
DEFAULT_RK4_STEPS = 64
DEFAULT_PATHS = 100_000
PATH_CHUNK_SIZE = 4096
CONSTANT_CONTROL_SHARE = 0.25
DEFAULT_VOLUME_CELLS = 24
NEWTON_MAX_ITERATIONS = 50
NEWTON_TOLERANCE = 1e-12
BRACKET_TOLERANCE = 1e-8

# Catalog of named phases and amplitudes
CATALOG_NAMES = [
    'monomial', 'sum_of_even_powers', 'radial_power',
    'flat_exponential', 'gaussian_bump', 'polynomial',
]

# CLI
COMMANDS = [
    'tame-check', 'eps-find', 'lp-verify', 'axioms', 'partition',
    'reduce', 'decay', 'sublevel', 'cc-check',
]
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ASSERTION = 2

# Environment variables
ENV_THREADS = "OSCIGEO_THREADS"
ENV_LOG_LEVEL = "OSCIGEO_LOG_LEVEL"
ENV_SEED = "OSCIGEO_SEED"
ENV_OUTPUT_DIR = "OSCIGEO_OUTPUT_DIR"

# Default configuration paths
DEFAULT_CONFIG_FILE = "configs/oscigeo.json"
DEFAULT_OUTPUT_DIR = "results"
