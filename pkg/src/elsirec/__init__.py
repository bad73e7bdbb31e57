"""Topic-conditioned content-based recommender for ELSI literature.

Pipeline: keyword corpus partition -> LDA topic labeling -> embedding-based
topic classifier -> topic-partitioned L1 nearest-neighbor recommendation.
"""

__version__ = "0.1.0"
