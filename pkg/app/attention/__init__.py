"""
Attention module for cloudfill

マスク付きマルチモーダル注意機構の参照実装
"""

from .kernel import AttentionInputs, attention_weights, masked_attention

__all__ = ["AttentionInputs", "attention_weights", "masked_attention"]
