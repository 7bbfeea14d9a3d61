"""medct: a clinical terminology graph engine.

Parse a SNOMED-style release into a concept graph, link free-text entity
mentions to concepts by embedding similarity, evaluate with character-level
IoU, serve concept-augmented hybrid retrieval, and build the LLM prompts
for translation bootstrapping and guided summarization.
"""

__version__ = "0.1.0"

from .terminology import Concept, ConceptGraph, Hierarchy, Relationship, parse_release
from .annotations import AnnotatedNote, Annotation, bio_decode, bio_encode, default_tokenize
from .embedding import EmbedderConfig, builtin_hash_embed, cosine, embed_texts
from .linker import (
    ConceptIndex,
    LinkedEntity,
    MedLinkPipeline,
    StaticDictionary,
    build_concept_index,
    build_static_dictionary,
    detect_mentions_dictionary,
    link_spans,
)
from .metrics import assignment_from_entities, iou_all, iou_concept, prf_at_k

__all__ = [
    "AnnotatedNote",
    "Annotation",
    "Concept",
    "ConceptGraph",
    "ConceptIndex",
    "EmbedderConfig",
    "Hierarchy",
    "LinkedEntity",
    "MedLinkPipeline",
    "Relationship",
    "StaticDictionary",
    "assignment_from_entities",
    "bio_decode",
    "bio_encode",
    "build_concept_index",
    "build_static_dictionary",
    "builtin_hash_embed",
    "cosine",
    "default_tokenize",
    "detect_mentions_dictionary",
    "embed_texts",
    "iou_all",
    "iou_concept",
    "link_spans",
    "parse_release",
]
