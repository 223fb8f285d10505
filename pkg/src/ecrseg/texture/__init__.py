from .formulas import glcm_features, glcm_features_batch, glrlm_features, glrlm_features_batch
from .maps import (
    DEFAULT_SELECTION,
    FeatureMapStack,
    feature_histograms,
    feature_maps,
    overlap_coefficient,
)
from .matrices import (
    DIRECTIONS_13,
    FEATURE_NAMES,
    GLCM_FEATURES,
    GLRLM_FEATURES,
    LONG_NAMES,
    GlcmMatrix,
    QuantizedVolume,
    RlmMatrix,
    TextureParams,
    canonical_feature,
    glcm_at,
    glrlm_at,
    parse_selection,
    quantize,
)
