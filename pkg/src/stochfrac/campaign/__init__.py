"""Campaign orchestration: configuration, Monte Carlo runs, rate studies and the CLI."""

from .config import CampaignConfig, RateHSpec, RateMSpec, load_config, parse_config, with_overrides
from .runner import (
    CampaignResult,
    SampleResult,
    build_sample_problem,
    run_campaign,
    run_rate_study,
    run_sample,
    run_samples,
    sample_microstructure,
)

__all__ = [
    "CampaignConfig",
    "CampaignResult",
    "RateHSpec",
    "RateMSpec",
    "SampleResult",
    "build_sample_problem",
    "load_config",
    "parse_config",
    "run_campaign",
    "run_rate_study",
    "run_sample",
    "run_samples",
    "sample_microstructure",
    "with_overrides",
]
