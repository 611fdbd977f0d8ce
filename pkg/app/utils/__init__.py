"""
Utility package initializer.

Contents:
- `helpers.py`: surface normalization, token counting and JSONL reading/writing.

Utilities are stateless and import nothing from services or schemas.
"""
