"""In-silico IHC restaining toolkit.

Pipeline: RGB -> optical density -> stain concentrations (codec encode),
channel remixing, then decode back to RGB. Includes a synthetic FOV
generator, a peak detector, and a Hungarian-matched F1 evaluation harness.
"""

from .colorspace import OD_MAX, OdImage, RgbImage, load_png, od_to_rgb, rgb_to_od, save_png
from .deconv import (
    DEFAULT_C_REF,
    ConcentrationImage,
    StainMatrix,
    deconvolve_inverse,
    deconvolve_nnls,
    estimate_stain_matrix,
    fixed_hd_matrix,
    load_stain_matrix,
    nnls_two_atoms,
    reconstruct,
    save_stain_matrix,
)
from .detect import DetectionList, DetectorConfig, detect_nuclei, save_detections_csv
from .errors import (
    CollapsedAtomError,
    DegenerateDataError,
    InvalidConfigError,
    RestainLabError,
    SingularMatrixError,
)
from .evaluation import (
    MatchResult,
    MetricsReport,
    compute_metrics,
    match_centers,
    micro_average,
    read_centers_csv,
    render_report,
)
from .pipeline import (
    DatasetManifest,
    HdCodec,
    ManifestEntry,
    generate_dataset,
    make_codec,
    render_preset_gallery,
    restain_image,
)
from .restain import AlphaParams, apply_kappa, paper_presets, preset_by_name
from .synth import (
    GroundTruth,
    SynthConfig,
    derive_fov_seed,
    fov_config,
    save_centers_csv,
    synthesize_fov,
)

__version__ = "0.1.0"
