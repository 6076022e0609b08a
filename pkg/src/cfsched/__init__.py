"""Joint user scheduling and robust beamforming for non-coherent user-centric
cell-free MIMO downlinks."""

__version__ = "0.1.0"
