"""repscope: representational sparsity and cluster purity for CNNs
trained with and without batch normalization."""

from .tensors import ActTensor4, RepMatrix, flatten, refold, unfold_channel, unfold_sample
from .datasets import LabeledDataset, read_cifar_batch, read_idx
from .artn import read_tensor, write_tensor
from .sparsity import ChannelSparsity, LayerSparsity, channel_sparsity, layer_sparsity, sparsity_over_layers
from .clustering import (
    ClusterAssignment,
    PurityScore,
    ReducedReps,
    class_based_purity,
    clustering_over_layers,
    dbi,
    kmeans,
    normalize_rows,
    optimal_k_sweep,
    spatial_average,
)
from .pipeline import (
    AggregateReport,
    ExperimentConfig,
    RunReport,
    aggregate_seeds,
    emit_plot_data,
    run_experiment,
)

__version__ = "0.1.0"
