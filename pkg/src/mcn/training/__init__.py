from .model import Extractor, Model, make_extractor
from .train import Dataset, TrainConfig, TrainTrace, train

__all__ = ["Dataset", "Extractor", "Model", "TrainConfig", "TrainTrace", "make_extractor", "train"]
