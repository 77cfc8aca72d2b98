"""Training-free attention editing on a toy joint-attention transformer."""
from .hooks import AttnHub, AttnOp, Band, ProjKind, ProjSite
from .mmdit import (
    LatentImage, Model, ModelConfig, SampleConfig, build_model, encode_source, encode_text,
    forward, load_config, sample,
)
from .ops import (
    Baseline, BandSpec, Compose, KVInject, MasaCtrl, SimpleKVScale, TextScale, build_ops,
    format_spec, parse_spec,
)
from .pipeline import edit
from .router import EditCategory, Router, classify, route, routed_edit

__version__ = "0.1.0"
