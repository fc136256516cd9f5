from .kernels import (
    chamfer_distance,
    coordinate_median,
    farthest_point_sample,
    knn_select,
    procrustes_align,
    sample_surface,
    v2v_error,
)
from .pointcloud import Mesh, PointCloud, RigidTransform
