"""Adverse-weather LiDAR toolkit: weather corruption, statistical denoising,
triple-plane projection, lifting wavelets and binary noise metrics."""

from .filters import (DynamicRadiusOutlierRemoval, DynamicStatisticalOutlierRemoval,
                      RadiusOutlierRemoval, StatisticalOutlierRemoval, dror_filter, dsor_filter,
                      make_filter, ror_filter, sor_filter)
from .io import (FOG_CODE, RAIN_CODE, SNOW_CODE, FrameManifest, LabelSet, PointCloud, read_labels,
                 read_manifest, read_point_cloud, to_noise_mask, write_labels, write_point_cloud)
from .metrics import ConfusionCounts, aggregate, confusion, f1_from_pr, iou_from_f1, metrics
from .projection import TriplePlaneProjector, gather_back, project_triple_planes
from .spatial import SpatialIndex, VoxelDownsampler, build_spatial_index, voxel_downsample
from .wavelet import (LiftingOperators, LiftingWavelet2D, lifting_forward_2d, lifting_inverse_2d,
                      wavelet_pyramid, wavelet_regularization)
from .weather import (FogParams, RainParams, SensorModel, SnowParams, WeatherAugmenter,
                      simulate_fog, simulate_rain, simulate_snow)

__version__ = "0.1.0"

__all__ = [
    "ConfusionCounts", "DynamicRadiusOutlierRemoval", "DynamicStatisticalOutlierRemoval",
    "FOG_CODE", "FogParams", "FrameManifest", "LabelSet", "LiftingOperators", "LiftingWavelet2D",
    "PointCloud", "RAIN_CODE", "RadiusOutlierRemoval", "RainParams", "SNOW_CODE", "SensorModel",
    "SnowParams", "SpatialIndex", "StatisticalOutlierRemoval", "TriplePlaneProjector",
    "VoxelDownsampler", "WeatherAugmenter", "aggregate", "build_spatial_index", "confusion",
    "dror_filter", "dsor_filter", "f1_from_pr", "gather_back", "iou_from_f1",
    "lifting_forward_2d", "lifting_inverse_2d", "make_filter", "metrics", "project_triple_planes",
    "read_labels", "read_manifest", "read_point_cloud", "ror_filter", "simulate_fog",
    "simulate_rain", "simulate_snow", "sor_filter", "to_noise_mask", "voxel_downsample",
    "wavelet_pyramid", "wavelet_regularization", "write_labels", "write_point_cloud",
]
