"""Frozen transformer backbone, persona prefixes, decoding and checkpoints."""

__all__ = [
    "BackboneModel",
    "DialogueSample",
    "ForwardResult",
    "Hypothesis",
    "PrefixParams",
    "Tokenizer",
    "beam_decode",
    "beam_search",
    "deployed_count",
    "finetune_backbone",
    "forward_lm",
    "greedy_decode",
    "greedy_search",
    "heldout_loss",
    "init_weights",
    "lm_loss",
    "load_backbone",
    "pretrain_backbone",
    "reparam_activations",
    "save_backbone",
    "transformer_logits",
    "weight_specs",
]

from .checkpoint import load_backbone, save_backbone
from .decoding import Hypothesis, beam_decode, beam_search, greedy_decode, greedy_search
from .prefix import PrefixParams, deployed_count, reparam_activations
from .pretrain import finetune_backbone, heldout_loss, pretrain_backbone
from .tokenizer import DialogueSample, Tokenizer
from .transformer import (
    BackboneModel,
    ForwardResult,
    forward_lm,
    init_weights,
    lm_loss,
    transformer_logits,
    weight_specs,
)
