"""Transformer encoder bridge for the ELSI recommender engine.

Inference only: encodes abstracts with a pretrained language model and
writes pooled, Tanh-activated document embeddings in the binary
interchange format the recommender engine reads.
"""

__version__ = "0.1.0"
