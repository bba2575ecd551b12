# Copyright (c) 2026 The X-Prompt Desk Authors
# SPDX-License-Identifier: Apache-2.0
"""RGB-X video object segmentation with a visual prompter and routed low-rank experts."""

from ._xprompt import (
    ConfigError,
    ContractError,
    IoError,
    Model,
    NumericError,
    boundary_map,
    bootstrapped_ce_loss,
    config_hash,
    cross_entropy,
    default_boundary_tol,
    default_config,
    keep_ratio_at,
    metric_f,
    metric_j,
    metric_jf,
    op_gradchecks,
    parse_variant,
    run_cli,
    soft_jaccard_loss,
    synth,
    validate_config,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "IoError",
    "Model",
    "NumericError",
    "boundary_map",
    "bootstrapped_ce_loss",
    "config_hash",
    "cross_entropy",
    "default_boundary_tol",
    "default_config",
    "keep_ratio_at",
    "metric_f",
    "metric_j",
    "metric_jf",
    "op_gradchecks",
    "parse_variant",
    "run_cli",
    "soft_jaccard_loss",
    "synth",
    "validate_config",
]
