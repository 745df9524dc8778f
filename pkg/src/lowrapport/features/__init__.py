from .relational import SyncConfig, crossmodal_au_features, hand_speech_feature, sync_features, sync_score
from .sets import (
    FACE_SETS,
    FeatureCache,
    FeatureConfig,
    FeatureVector,
    assemble_features,
    feature_names,
    required_modalities,
    resolve_blocks,
)
from .unimodal import (
    MISSING,
    au_stats,
    facing_features,
    hand_features,
    hand_velocity_series,
    posiface_series,
    posiface_stats,
    prosody_features,
    speech_activity_features,
)
