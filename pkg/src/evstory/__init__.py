"""Event-driven story generation: corpus tools, event extraction, a
context-fused seq2seq generator, and automatic evaluation."""

__version__ = "0.1.0"
