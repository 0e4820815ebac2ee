from .channels import ConfigError, ControlEmbed, DownwardPass, ObservationEmbed, PeerPass, UpwardPass
from .edges import EdgeBelief, EdgeInference
from .hierarchy import HierarchyError, HierarchySpec
from .rein import ABLATIONS, ELBOTerms, LatentCell, LatentSample, ModelConfig, REIN, cell_step

__all__ = [
    "ConfigError", "ControlEmbed", "DownwardPass", "ObservationEmbed", "PeerPass", "UpwardPass",
    "EdgeBelief", "EdgeInference", "HierarchyError", "HierarchySpec", "ABLATIONS", "ELBOTerms",
    "LatentCell", "LatentSample", "ModelConfig", "REIN", "cell_step",
]
