"""Visual dynamic clustering with self-organizing time maps.

A time map is a sequence of one-dimensional batch SOMs, one per time slice of
an entity x time x feature data cube, each initialized from its trained
predecessor so unit identity carries across time. The package adds
instance-weighted learning, per-slice neighborhood-radius tuning against the
Kaski-Lagus goodness value, quality reporting, and SVG/CSV rendering.
"""

from .autotune import TuneGrid, TuneReport, auto_train, tune_sigma, verify_tuning
from .core import (
    ReferenceArray,
    SotmModel,
    TrainConfig,
    batch_update,
    find_bmu,
    neighborhood,
    neighborhood_matrix,
    pca_init,
    second_bmu,
    sigma_schedule,
    train_slice,
    train_sotm,
)
from .datacube import (
    DataCube,
    DataError,
    EmptyInputError,
    Observation,
    ParseError,
    SchemaError,
    TimeSlice,
    load_csv,
    percentile_normalize,
    save_csv,
)
from .quality import (
    QualityReport,
    aggregate,
    dm_slice,
    kl_slice,
    qe_slice,
    sc_slice,
    te_slice,
)
from .viz import (
    FeaturePlane,
    Projection,
    feature_plane,
    plane_csv,
    project_units,
    projection_csv,
    render_map_svg,
    render_plane_svg,
    sammon_project,
    unit_colors,
)

__version__ = "0.1.0"

__all__ = [
    "DataCube",
    "DataError",
    "EmptyInputError",
    "FeaturePlane",
    "Observation",
    "ParseError",
    "Projection",
    "QualityReport",
    "ReferenceArray",
    "SchemaError",
    "SotmModel",
    "TimeSlice",
    "TrainConfig",
    "TuneGrid",
    "TuneReport",
    "aggregate",
    "auto_train",
    "batch_update",
    "dm_slice",
    "feature_plane",
    "find_bmu",
    "kl_slice",
    "load_csv",
    "neighborhood",
    "neighborhood_matrix",
    "pca_init",
    "percentile_normalize",
    "plane_csv",
    "project_units",
    "projection_csv",
    "qe_slice",
    "render_map_svg",
    "render_plane_svg",
    "sammon_project",
    "save_csv",
    "sc_slice",
    "second_bmu",
    "sigma_schedule",
    "te_slice",
    "train_slice",
    "train_sotm",
    "tune_sigma",
    "unit_colors",
    "verify_tuning",
    "__version__",
]
