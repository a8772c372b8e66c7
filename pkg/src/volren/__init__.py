"""volren: CPU volume rendering and isosurface extraction for regular grids."""

from .volume import (
    ScalarVolume,
    load_volume,
    save_volume,
    normalize,
    make_phantom,
    gradient_volume,
)
from .transfer import TransferFunction, load_tf, save_tf
from .camera import Camera, Orthographic, Perspective, look_at, orbit, axis_camera
from .image import FrameBuffer, write_ppm, write_png
from .sampling import sample_trilinear
from .mesh import TriangleMesh, load_mesh, save_mesh
from .isosurface import extract_surface
from .classify import ClassifiedVolume, Shading, classify_volume
from .raycast import RayConfig
from .accel import (
    PresencePyramid,
    RangePyramid,
    AveragePyramid,
    DistanceMap,
    BoundaryVoxelList,
    build_presence_pyramid,
    build_range_pyramid,
    build_average_pyramid,
    build_distance_map,
    chamfer_distance,
    raycast_presence,
    raycast_proximity,
    raycast_homogeneous,
    extract_boundary_voxels,
    front_facing,
    render_points,
)
from .splat import (
    FootprintTable,
    SheetBuffer,
    build_generic_footprint,
    view_transform_footprint,
    render_splat,
    render_splat_hierarchical,
)
from .shearwarp import (
    ShearWarpFactorization,
    RleVolume,
    BasePlaneImage,
    factorize,
    rle_encode,
    reuse_or_encode,
    render_shearwarp,
    save_rle,
    load_rle,
)
from .engine import (
    Engine,
    RenderRequest,
    CameraSpec,
    BadRequestError,
    NotFoundError,
)
from .service import RenderService, make_server

__version__ = "0.1.0"

__all__ = [
    "ScalarVolume",
    "load_volume",
    "save_volume",
    "normalize",
    "make_phantom",
    "gradient_volume",
    "TransferFunction",
    "load_tf",
    "save_tf",
    "Camera",
    "Orthographic",
    "Perspective",
    "look_at",
    "orbit",
    "axis_camera",
    "FrameBuffer",
    "write_ppm",
    "write_png",
    "sample_trilinear",
    "TriangleMesh",
    "load_mesh",
    "save_mesh",
    "extract_surface",
    "ClassifiedVolume",
    "Shading",
    "classify_volume",
    "RayConfig",
    "PresencePyramid",
    "RangePyramid",
    "AveragePyramid",
    "DistanceMap",
    "BoundaryVoxelList",
    "build_presence_pyramid",
    "build_range_pyramid",
    "build_average_pyramid",
    "build_distance_map",
    "chamfer_distance",
    "raycast_presence",
    "raycast_proximity",
    "raycast_homogeneous",
    "extract_boundary_voxels",
    "front_facing",
    "render_points",
    "FootprintTable",
    "SheetBuffer",
    "build_generic_footprint",
    "view_transform_footprint",
    "render_splat",
    "render_splat_hierarchical",
    "ShearWarpFactorization",
    "RleVolume",
    "BasePlaneImage",
    "factorize",
    "rle_encode",
    "reuse_or_encode",
    "render_shearwarp",
    "save_rle",
    "load_rle",
    "Engine",
    "RenderRequest",
    "CameraSpec",
    "BadRequestError",
    "NotFoundError",
    "RenderService",
    "make_server",
    "__version__",
]
