"""Joint MRI reconstruction and multi-class segmentation by Bregman iteration."""

from .joint import constrained_joint_solve, joint_solve
from .metrics import evaluate, psnr, rre, rse
from .operators import ForwardOperator
from .recon import bregman_tv_reconstruct, tv_reconstruct
from .segment import bregman_segment, segment, threshold
from .simulate import MaskSpec, PhantomSpec, make_mask, make_phantom, simulate_kspace, snr_of
from .types import (
    Grid,
    HardSegmentation,
    JointConfig,
    KSpaceData,
    LabelRelaxation,
    RealImage,
    RegionMeans,
    SamplingMask,
    SolveReport,
    StopReason,
    validate,
)

__version__ = "0.1.0"
