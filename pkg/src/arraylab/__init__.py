"""Sparse linear arrays: geometries, min/product beampatterns, metrics and DoA simulation."""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    ArrayGeometry,
    ArrayKind,
    Coarray,
    GeometryError,
    Subarray,
    build_basic_csa,
    build_ecsa,
    build_geometry,
    build_mcsa,
    build_nsa,
    build_sca,
    build_ula,
    bundled_mra17,
    compute_coarray,
    load_mra,
    validate_coprime,
)
from .beamforming import (  # noqa: E402
    BeamPattern,
    Combiner,
    ScanGrid,
    combine_min,
    combine_product,
    composite_pattern,
    steering_response,
    subarray_pattern,
)
from .metrics import (  # noqa: E402
    PatternMetrics,
    SavingsRatio,
    grating_lobe_report,
    main_lobe_width,
    peak_sidelobe_db,
    savings_ratio,
)
from .simulation import (  # noqa: E402
    SourceScene,
    detect_peaks,
    doa_spectrum,
    evaluate_detection,
    generate_snapshots,
)
