from .dataset import (
    PopupDataset,
    downsample_indices,
    downsample_sequence,
    load_dataset,
    read_frame_sequence,
)
from .synthetic import SyntheticScene, generate_synthetic, render_raw_scan
