"""Default hyperparameters and presets.

These mirror the experimental setup of the case-outcome selective prediction
study the toolkit was built for. ``defaults()`` returns them as a plain dict
for introspection (the CLI prints the same values in ``--help``).
"""

from __future__ import annotations

# Monte-Carlo dropout passes per instance.
N_MC_RUNS = 10

# Equal-width confidence bins for the ECE loss.
ECE_BINS = 10

# Regularizer weights tried for CER / ECE.
LAMBDA_GRID = (0.01, 0.05, 0.1, 0.5)

# Rejection rewards tried for the gambler's loss.
REWARD_GRID = (1.0, 5.0, 6.5, 14.0)

# Gambler warm-up epochs (the training loop owns this; informational only).
GAMBLER_WARMUP_EPOCHS = 4

# Upper bounds of the label-frequency buckets: <1%, 1-10%, 10-20%, 20-40%.
BUCKET_BOUNDARIES = (0.01, 0.10, 0.20, 0.40)

DECISION_THRESHOLD = 0.5

ESTIMATORS = ("sr", "smp", "pv", "bald")
BALD_CONVENTIONS = ("standard", "paper_literal")
REPORT_FORMATS = ("csv", "jsonl", "svg")
DEGENERATE_POLICIES = ("exclude", "zero")

# Gradient-check settings.
FD_STEP = 1e-5
FD_REL_TOL = 1e-6
FD_EXCLUSION = 1e-4


def defaults() -> dict:
    return {
        "n_mc_runs": N_MC_RUNS,
        "ece_bins": ECE_BINS,
        "lambda_grid": list(LAMBDA_GRID),
        "reward_grid": list(REWARD_GRID),
        "gambler_warmup_epochs": GAMBLER_WARMUP_EPOCHS,
        "bucket_boundaries": list(BUCKET_BOUNDARIES),
        "decision_threshold": DECISION_THRESHOLD,
        "estimators": list(ESTIMATORS),
        "bald_conventions": list(BALD_CONVENTIONS),
        "fd_step": FD_STEP,
        "fd_rel_tol": FD_REL_TOL,
        "fd_exclusion": FD_EXCLUSION,
    }
