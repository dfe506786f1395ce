"""Grid-cell traffic density estimation with HOG+LBP features and a linear SVM."""
from .features import HogParams, LbpParams, extract_batch, extract_features, get_backend
from .imaging import GridSpec, Image, Roi, decode_netpbm, encode_netpbm
from .pipeline import DensityReport, annotate, build_dataset, estimate_density, split_dataset
from .svm import LinearSvmModel, TrainConfig, evaluate, load_model, predict, save_model, train

__version__ = "0.1.0"
