"""Billing data preparation: JSON bills to relational tables, churn features and models."""

from billprep.mapping import (
    GatDefinition,
    JsonPath,
    MappingSpec,
    parse_json_path,
    parse_mapping_file,
    serialize_mapping_file,
)

__all__ = [
    "GatDefinition",
    "JsonPath",
    "MappingSpec",
    "parse_json_path",
    "parse_mapping_file",
    "serialize_mapping_file",
]

__version__ = "0.1.0"
