"""
Version 1 (v1) Pydantic schemas of the KG service HTTP contract.

Purpose:
- Request and response payloads of `/kg/search`; changes here are API changes.
"""
