from .augment import AugmentationRanges, TrainSample, augment_sample
from .losses import loss_center, loss_class, loss_offset, total_loss
from .trainer import Trainer, TrainResult, learning_rate, train
