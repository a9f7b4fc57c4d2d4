"""Encoder, part-whole transformer and projection head."""

from mart.model.encoder import Encoder, channel_plan
from mart.model.head import ProjectionHead
from mart.model.mart import MARTModel
from mart.model.pwt import (
    HierState,
    InteractionUnit,
    cross_attend,
    interact,
    pwt_block,
    pwt_stack,
    reset_attention_counter,
)

__all__ = [
    "Encoder", "HierState", "InteractionUnit", "MARTModel", "ProjectionHead", "channel_plan",
    "cross_attend", "interact", "pwt_block", "pwt_stack", "reset_attention_counter",
]
