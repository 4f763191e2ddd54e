"""dcaforge tests package."""
