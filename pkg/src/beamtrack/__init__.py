"""Sound source localization with a frequency-domain steered beamformer and particle-filter tracking."""

from .beamformer import BeamformerConfig, Observation, PotentialSource, localize_multiple
from .frontend import FrontendConfig, SpectralFrontend, StftConfig
from .geometry import ArrayGeometry, build_icosahedral_grid, build_tdoa_lookup, load_geometry
from .pipeline import PipelineConfig, load_config, run_tracking
from .tracker import Tracker, TrackerConfig

__version__ = "0.1.0"
