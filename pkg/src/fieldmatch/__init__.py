"""Hierarchical multi-field matching of cloud solutions to candidate companies.

Token-level dual encoders over description and attribute sequences, a scale
encoder over company size features, and a field-level Transformer over
per-field summaries; optional contrastive pretraining with token masking,
field masking and company replacing. Runs end to end on a synthetic corpus
with planted industry and scale structure.
"""

from .config import RunConfig
from .data import CompanyRecord, FieldSchema, MatchExample, SolutionRecord
from .model import MatchModel, ModelConfig

__version__ = "0.1.0"
