# Pydantic schemas and domain types
