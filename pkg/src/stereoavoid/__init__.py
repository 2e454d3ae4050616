"""Embedded-style stereo disparity, U/V-disparity obstacle detection and reactive avoidance."""
from .imgio import DecodeError, DisparityMap, GrayImage
from .rectify import RectificationMaps, StereoCalibration
from .cost import CostVolume, CensusImage
from .sgm import SgmParams, compute_disparity
from .config import PipelineConfig

__version__ = "0.1.0"
