"""Software OFDM link: coded packets over time-variant channels, PER per window."""

from .phy import PhyConfig, load_phy_config
from .sim import PerSeries, ensemble_per, envelope, per_ratio_cdf, run_link, time_in_envelope

__all__ = ["PerSeries", "PhyConfig", "load_phy_config", "ensemble_per", "envelope", "per_ratio_cdf", "run_link", "time_in_envelope"]
