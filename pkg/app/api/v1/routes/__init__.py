"""
API route grouping for version v1.

Each module defines an `APIRouter` and keeps handlers thin: validate, call the service,
serialize.
"""
