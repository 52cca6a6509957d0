"""Phrase grounding from diffusion cross-attention maps.

Pipeline: attention dumps (attnstore) -> token selection (tokenfilter)
-> activation maps (extraction) -> bimodal bias merging (bbm) -> GMM
masks (masking) -> grounding metrics (metrics).  synthoracle provides an
analytic test bed; toydiff a trainable desk-scale diffusion model.
"""

from .attnstore import (
    AttentionDump,
    DumpFormatError,
    DumpValidationError,
    GroundTruthRegion,
    LayerInfo,
    TokenMeta,
    read_dump,
    write_dump,
)
from .tokenfilter import TokenMode, select_tokens
from .extraction import ActivationMap, ExtractionSpec, extract_comb, extract_img_bias, upsample
from .bbm import MergeResult, bias_interaction, merge, run_bbm, ssim
from .masking import BinaryMask, GmmFit, binarize, fit_gmm, mask_from_map
from .metrics import MetricsRecord, GroundingReport, aggregate, auc_roc, cnr, iou, top1

__version__ = "0.1.0"
