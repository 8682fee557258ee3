"""Semantic conversion of transit data: CSV lifting, RDF graph, template lowering."""

__version__ = "0.1.0"
