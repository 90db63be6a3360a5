"""tablescout: zero-shot retrieval of relational tables for natural-language
questions, via dual encoders trained with a margin contrastive loss."""

__version__ = "0.1.0"
