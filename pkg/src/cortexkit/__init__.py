"""Layer-wise local learning, sparse ensemble coding, and associative recall
on plain numpy, with scikit-learn style estimator front ends."""

from .biolwbp import BioLwbpClassifier, BioModule, BioNetwork
from .cerebellum import (AdjustmentPlan, GranulePurkinje, apply_plan,
                         effective_weight, plan_adjustment)
from .engram import (EngramAutoencoder, MnistEngramAutoencoder, SparsityStats,
                     density_heatmap, field_centroid, field_peak)
from .lwbp import (BpClassifier, BpNetwork, LwbpClassifier, LwbpModule,
                   LwbpNetwork, ModuleMetrics, predict_class_map, unit_grid)
from .memory import (LtpSynapses, engram_set, form_ltp, memory_heatmap,
                     recall_degree, shared_engram)
from .nncore import Param, normalize_sample, rmsprop_step
from .pipeline import (ActivationPacket, PipelineConfig, PipelineResult,
                       run_async, run_pipeline, run_sync, throughput_report)

__version__ = "0.1.0"

__all__ = [
    "AdjustmentPlan", "ActivationPacket", "BioLwbpClassifier", "BioModule",
    "BioNetwork", "BpClassifier", "BpNetwork", "EngramAutoencoder",
    "GranulePurkinje", "LtpSynapses", "LwbpClassifier", "LwbpModule",
    "LwbpNetwork", "MnistEngramAutoencoder", "ModuleMetrics", "Param",
    "PipelineConfig", "PipelineResult", "SparsityStats", "apply_plan",
    "density_heatmap", "effective_weight", "engram_set", "field_centroid",
    "field_peak", "form_ltp", "memory_heatmap", "normalize_sample",
    "plan_adjustment", "predict_class_map", "recall_degree", "rmsprop_step",
    "run_async", "run_pipeline", "run_sync", "shared_engram",
    "throughput_report", "unit_grid",
]
