from .pipeline import (
    FrameGroundTruth,
    FrameSequence,
    PopupPredictor,
    PoseEstimate,
    fit_template,
    popup_sequence,
    popup_single,
)
from .smoothing import smooth_sequence, vote_class
