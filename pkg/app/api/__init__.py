"""
API root package.

Purpose:
- HTTP entry point of the KG service, organized by API version (`v1/`).
- Keeps request/response handling apart from the services it calls.
"""
