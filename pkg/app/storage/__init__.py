"""
Result storage package.
"""

from .results import ResultWriter, read_provenance, read_table

__all__ = ["ResultWriter", "read_provenance", "read_table"]
