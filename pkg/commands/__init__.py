"""Command blueprints for the toolkit CLI."""
